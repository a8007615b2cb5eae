// csyn: circuit topology synthesis workbench.
//
// Subcommands: gen-data, simulate, train-clf, train-lm, refine, sample,
// eval, ablate, config-docs. Exit codes: 0 ok, 1 usage, 2 data/format,
// 3 numerical failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "csyn/checkpoint.hpp"
#include "csyn/config.hpp"
#include "csyn/evaluation.hpp"

namespace fs = std::filesystem;
using namespace csyn;

namespace {

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

void check_overwrite(const std::string& path, bool force) {
  if (!force && fs::exists(path)) {
    throw UsageError(path + " exists; pass --force to overwrite");
  }
}

SimConfig sim_config(const Config& cfg) {
  SimConfig s;
  s.c_dev = cfg.get_double("sim.c_dev");
  s.l_dev = cfg.get_double("sim.l_dev");
  s.r_in = cfg.get_double("sim.r_in");
  s.r_load = cfg.get_double("sim.r_load");
  s.c_out = cfg.get_double("sim.c_out");
  s.v_in = cfg.get_double("sim.v_in");
  s.f_sw = cfg.get_double("sim.f_sw");
  s.r_on = cfg.get_double("sim.r_on");
  s.r_off = cfg.get_double("sim.r_off");
  s.g_min = cfg.get_double("sim.g_min");
  s.steps_per_period = cfg.get_int("sim.steps_per_period");
  s.max_periods = cfg.get_int("sim.max_periods");
  s.min_periods = cfg.get_int("sim.min_periods");
  s.ss_tol = cfg.get_double("sim.ss_tol");
  return s;
}

AdamWConfig adamw_config(const Config& cfg, const char* lr_key) {
  AdamWConfig a;
  a.lr = cfg.get_double(lr_key);
  a.beta1 = cfg.get_double("train.beta1");
  a.beta2 = cfg.get_double("train.beta2");
  a.eps = cfg.get_double("train.eps");
  a.weight_decay = cfg.get_double("train.weight_decay");
  return a;
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.optimizer = adamw_config(cfg, "train.lr");
  t.batch_size = cfg.get_int("train.batch_size");
  t.epochs = cfg.get_int("train.epochs");
  t.seed = cfg.get_u64("train.seed");
  t.grad_clip = cfg.get_double("train.grad_clip");
  t.balance_classes = cfg.get_bool("train.balance_classes");
  t.metrics_path = cfg.get_string("metrics.path");
  return t;
}

TrainConfig refine_config(const Config& cfg) {
  TrainConfig t = train_config(cfg);
  t.optimizer = adamw_config(cfg, "refine.lr");
  t.refine_steps = cfg.get_int("refine.steps");
  t.nll_batch = cfg.get_int("refine.nll_batch");
  t.rollout_batch = cfg.get_int("refine.rollout_batch");
  const std::string mode = cfg.get_string("refine.tau_mode");
  if (mode == "fixed") {
    t.tau.mode = TauSchedule::Mode::Fixed;
  } else if (mode == "exp") {
    t.tau.mode = TauSchedule::Mode::ExpAnneal;
  } else {
    throw ConfigError("refine.tau_mode must be fixed or exp, got '" + mode + "'");
  }
  t.tau.tau0 = cfg.get_double("refine.tau0");
  t.tau.tau_min = cfg.get_double("refine.tau_min");
  return t;
}

DecodeParams decode_params(const Config& cfg) {
  DecodeParams d;
  d.temperature = cfg.get_double("decode.temperature");
  d.top_k = cfg.get_int("decode.top_k");
  d.top_p = cfg.get_double("decode.top_p");
  d.max_len = cfg.get_int("decode.max_len");
  if (d.top_k < 1 || d.top_p <= 0.0 || d.top_p > 1.0 || d.temperature <= 0.0) {
    throw ConfigError("invalid decode parameters");
  }
  return d;
}

GeneratorConfig generator_config(const Config& cfg) {
  GeneratorConfig g;
  g.d_model = cfg.get_int("model.d_model");
  g.n_layers = cfg.get_int("model.n_layers");
  g.n_heads = cfg.get_int("model.n_heads");
  return g;
}

ClassifierConfig classifier_config(const Config& cfg) {
  ClassifierConfig c;
  c.d_model = cfg.get_int("clf.d_model");
  c.hidden = cfg.get_int("clf.hidden");
  c.n_layers = cfg.get_int("clf.n_layers");
  c.n_heads = cfg.get_int("clf.n_heads");
  return c;
}

SplitSpec split_spec(const Config& cfg) {
  SplitSpec s;
  s.train_fraction = cfg.get_double("data.split_train");
  s.val_fraction = cfg.get_double("data.split_val");
  s.test_fraction = cfg.get_double("data.split_test");
  s.seed = cfg.get_u64("data.split_seed");
  return s;
}

EncodingMode encoding_mode(const Config& cfg) {
  auto m = encoding_mode_from_name(cfg.get_string("encoding"));
  if (!m) throw ConfigError("encoding must be nl or array");
  return *m;
}

PipelineConfig pipeline_config(const Config& cfg) {
  PipelineConfig p;
  p.generator = generator_config(cfg);
  p.classifier = classifier_config(cfg);
  p.clf_train = train_config(cfg);
  p.lm_train = train_config(cfg);
  p.refine_train = refine_config(cfg);
  p.decode = decode_params(cfg);
  p.sim = sim_config(cfg);
  p.split_spec = split_spec(cfg);
  p.n_unique = cfg.get_int("eval.n_unique");
  p.max_attempts =
      static_cast<int64_t>(cfg.get_int("eval.max_attempts_factor")) * p.n_unique;
  p.threshold = cfg.get_double("eval.threshold");
  p.threads = cfg.get_int("threads");
  return p;
}

// ---- checkpoint helpers (model config stored as a meta tensor) ----

void save_generator(const std::string& path, Generator& g) {
  Parameter meta("meta.generator", {4});
  meta.value = {static_cast<double>(g.config().d_model),
                static_cast<double>(g.config().n_layers),
                static_cast<double>(g.config().n_heads),
                static_cast<double>(g.config().max_seq)};
  std::vector<const Parameter*> params{&meta};
  for (auto* p : g.parameters()) params.push_back(p);
  save_checkpoint(path, params);
}

Generator load_generator(const std::string& path) {
  const auto blobs = read_checkpoint(path);
  auto it = blobs.find("meta.generator");
  if (it == blobs.end()) {
    throw CheckpointError(path + " is not a generator checkpoint (no meta.generator)");
  }
  GeneratorConfig gc;
  gc.d_model = static_cast<int>(it->second.data.at(0));
  gc.n_layers = static_cast<int>(it->second.data.at(1));
  gc.n_heads = static_cast<int>(it->second.data.at(2));
  gc.max_seq = static_cast<int>(it->second.data.at(3));
  Generator g(gc, 0);
  load_checkpoint(path, g.parameters());
  return g;
}

void save_classifier(const std::string& path, Classifier& c) {
  Parameter meta("meta.classifier", {5});
  meta.value = {static_cast<double>(c.config().d_model),
                static_cast<double>(c.config().hidden),
                static_cast<double>(c.config().n_layers),
                static_cast<double>(c.config().n_heads),
                static_cast<double>(c.config().max_seq)};
  std::vector<const Parameter*> params{&meta};
  for (auto* p : c.parameters()) params.push_back(p);
  save_checkpoint(path, params);
}

Classifier load_classifier(const std::string& path) {
  const auto blobs = read_checkpoint(path);
  auto it = blobs.find("meta.classifier");
  if (it == blobs.end()) {
    throw CheckpointError(path + " is not a classifier checkpoint (no meta.classifier)");
  }
  ClassifierConfig cc;
  cc.d_model = static_cast<int>(it->second.data.at(0));
  cc.hidden = static_cast<int>(it->second.data.at(1));
  cc.n_layers = static_cast<int>(it->second.data.at(2));
  cc.n_heads = static_cast<int>(it->second.data.at(3));
  cc.max_seq = static_cast<int>(it->second.data.at(4));
  Classifier c(cc, 0);
  load_checkpoint(path, c.parameters());
  return c;
}

ComponentPool parse_pool_arg(const std::string& arg) {
  std::array<DeviceKind, kPoolSize> kinds{};
  std::string word;
  int i = 0;
  for (size_t at = 0; at <= arg.size(); ++at) {
    if (at == arg.size() || arg[at] == ',' || arg[at] == ' ') {
      if (word.empty()) continue;
      auto k = kind_from_name(word);
      if (!k) throw UsageError("unknown device kind '" + word + "' in --pool");
      if (i >= kPoolSize) throw UsageError("--pool must list exactly 5 devices");
      kinds[static_cast<size_t>(i++)] = *k;
      word.clear();
    } else {
      word.push_back(arg[at]);
    }
  }
  if (i != kPoolSize) throw UsageError("--pool must list exactly 5 devices");
  return ComponentPool(kinds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"circuit topology synthesis workbench"};
  app.require_subcommand(1);
  app.fallthrough();  // global --config/--set may follow the subcommand

  Config cfg;
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key=value config file (default: csyn.cfg if present)");
  app.add_option("--set", overrides, "inline config override key=value (repeatable)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an oracle-labeled dataset");
  uint64_t gd_n = 1000, gd_seed = 0;
  std::string gd_out;
  bool gd_dedup = false, gd_force = false, gd_no_screen = false;
  gen->add_option("--n", gd_n, "number of records")->required();
  gen->add_option("--seed", gd_seed, "generation seed")->required();
  gen->add_option("--out", gd_out, "output .csd file")->required();
  gen->add_flag("--dedup", gd_dedup, "drop duplicate (canonical key, duty) pairs");
  gen->add_flag("--no-screen", gd_no_screen, "simulate even screen-disconnected circuits");
  gen->add_flag("--force", gd_force, "overwrite the output file");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run the transient oracle on one netlist");
  std::string sm_netlist_file, sm_inline, sm_pool, sm_encoding;
  double sm_duty = 0.5;
  sim->add_option("--netlist", sm_netlist_file, "file holding the netlist text");
  sim->add_option("--inline", sm_inline, "netlist text on the command line");
  sim->add_option("--pool", sm_pool, "component pool, e.g. 'C,C,L,Sa,Sb'")->required();
  sim->add_option("--duty", sm_duty, "duty cycle (0.1/0.3/0.5/0.7/0.9)")->required();
  sim->add_option("--encoding", sm_encoding, "nl or array (default: config)");

  // train-clf
  auto* tclf = app.add_subcommand("train-clf", "train the validity classifier");
  std::string tc_data, tc_out;
  bool tc_force = false;
  tclf->add_option("--data", tc_data, ".csd dataset")->required();
  tclf->add_option("--out", tc_out, "classifier checkpoint")->required();
  tclf->add_flag("--force", tc_force, "overwrite the output file");

  // train-lm
  auto* tlm = app.add_subcommand("train-lm", "pretrain the topology generator");
  std::string tl_data, tl_out;
  bool tl_force = false;
  tlm->add_option("--data", tl_data, ".csd dataset")->required();
  tlm->add_option("--out", tl_out, "generator checkpoint")->required();
  tlm->add_flag("--force", tl_force, "overwrite the output file");

  // refine
  auto* ref = app.add_subcommand("refine", "gumbel straight-through refinement");
  std::string rf_lm, rf_clf, rf_data, rf_out;
  bool rf_force = false;
  ref->add_option("--lm", rf_lm, "generator checkpoint")->required();
  ref->add_option("--clf", rf_clf, "frozen classifier checkpoint")->required();
  ref->add_option("--data", rf_data, ".csd dataset")->required();
  ref->add_option("--out", rf_out, "refined generator checkpoint")->required();
  ref->add_flag("--force", rf_force, "overwrite the output file");

  // sample
  auto* smp = app.add_subcommand("sample", "draw netlists from a generator");
  std::string sp_lm, sp_encoding;
  int sp_n = 10;
  uint64_t sp_seed = 0;
  smp->add_option("--lm", sp_lm, "generator checkpoint")->required();
  smp->add_option("--n", sp_n, "number of samples")->required();
  smp->add_option("--seed", sp_seed, "sampling seed")->required();
  smp->add_option("--encoding", sp_encoding, "nl or array (default: config)");

  // eval
  auto* evl = app.add_subcommand("eval", "metric suite on unique generations");
  std::string ev_lm, ev_clf, ev_out = "eval", ev_encoding;
  int ev_n_unique = 0;
  uint64_t ev_seed = 0;
  bool ev_force = false;
  evl->add_option("--lm", ev_lm, "generator checkpoint")->required();
  evl->add_option("--clf", ev_clf, "classifier checkpoint")->required();
  evl->add_option("--n-unique", ev_n_unique, "unique topologies (default: config)");
  evl->add_option("--seed", ev_seed, "evaluation seed")->required();
  evl->add_option("--out", ev_out, "output prefix (writes <out>.report.tsv, <out>.plot.tsv)");
  evl->add_option("--encoding", ev_encoding, "nl or array (default: config)");
  evl->add_flag("--force", ev_force, "overwrite outputs");

  // ablate
  auto* abl = app.add_subcommand("ablate", "paired nl/array pipeline comparison");
  std::string ab_data, ab_out = "ablation";
  uint64_t ab_seed = 1;
  bool ab_force = false;
  abl->add_option("--data", ab_data, ".csd dataset")->required();
  abl->add_option("--seed", ab_seed, "pipeline seed");
  abl->add_option("--out", ab_out, "output prefix");
  abl->add_flag("--force", ab_force, "overwrite outputs");

  // config-docs
  auto* docs = app.add_subcommand("config-docs", "print every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (!config_path.empty()) {
      cfg.load_file(config_path);
    } else if (fs::exists("csyn.cfg")) {
      cfg.load_file("csyn.cfg");
    }
    for (const auto& kv : overrides) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }

    if (*docs) {
      std::cout << cfg.documentation();
      return 0;
    }

    if (*gen) {
      check_overwrite(gd_out, gd_force);
      GenerateOptions opt;
      opt.seed = gd_seed;
      opt.dedup = gd_dedup;
      opt.use_screen = !gd_no_screen;
      opt.threads = cfg.get_int("threads");
      GenerateStats stats;
      const auto records = generate_dataset(gd_n, sim_config(cfg), opt, &stats);
      write_records(gd_out, records);
      std::cout << "records=" << records.size() << " drawn=" << stats.drawn
                << " valid=" << stats.valid << " screened_out=" << stats.screened_out
                << " duplicates=" << stats.duplicates << "\n";
      return 0;
    }

    if (*sim) {
      if (sm_netlist_file.empty() == sm_inline.empty()) {
        throw UsageError("simulate needs exactly one of --netlist or --inline");
      }
      if (!is_allowed_duty(sm_duty)) {
        throw UsageError("--duty must be one of 0.1 0.3 0.5 0.7 0.9");
      }
      std::string text = sm_inline;
      if (!sm_netlist_file.empty()) {
        std::ifstream in(sm_netlist_file);
        if (!in) throw DataError("cannot open " + sm_netlist_file);
        std::ostringstream buf;
        buf << in.rdbuf();
        text = buf.str();
        // Netlist files may be line-wrapped; the grammar is whitespace-joined.
        for (auto& ch : text) {
          if (ch == '\n' || ch == '\r' || ch == '\t') ch = ' ';
        }
      }
      if (!sm_encoding.empty()) cfg.set("encoding", sm_encoding);
      const ComponentPool pool = parse_pool_arg(sm_pool);
      Topology t = parse_topology(text, pool, encoding_mode(cfg));
      const OracleResult o = oracle(t, sm_duty, sim_config(cfg));
      std::cout << "valid=" << (o.valid ? 1 : 0) << "\n"
                << "status=" << (o.sim.status == SimStatus::Valid ? "ok" : "invalid") << "\n"
                << "reason=" << (o.valid ? "-" : o.reason) << "\n";
      char line[128];
      std::snprintf(line, sizeof line, "v_out_avg=%.6f\n", o.sim.v_out_avg);
      std::cout << line;
      std::snprintf(line, sizeof line, "p_in=%.6f\n", o.sim.p_in);
      std::cout << line;
      std::snprintf(line, sizeof line, "p_out=%.6f\n", o.sim.p_out);
      std::cout << line;
      std::snprintf(line, sizeof line, "efficiency=%.6f\n", o.sim.efficiency);
      std::cout << line;
      std::cout << "periods_run=" << o.sim.periods_run << "\n";
      return 0;
    }

    if (*tclf) {
      check_overwrite(tc_out, tc_force);
      const auto records = read_records(tc_data);
      const EncodingMode mode = encoding_mode(cfg);
      const PipelineConfig p = pipeline_config(cfg);
      Classifier clf(p.classifier, p.clf_train.seed);
      const ClfReport r = train_pipeline_classifier(records, mode, p, clf);
      save_classifier(tc_out, clf);
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "f1=%.4f precision=%.4f recall=%.4f accuracy=%.4f best_epoch=%d\n", r.f1,
                    r.precision, r.recall, r.accuracy, r.best_epoch);
      std::cout << buf;
      return 0;
    }

    if (*tlm) {
      check_overwrite(tl_out, tl_force);
      const auto records = read_records(tl_data);
      const EncodingMode mode = encoding_mode(cfg);
      const PipelineConfig p = pipeline_config(cfg);
      const Split s = split(records, p.split_spec);
      const auto train = make_lm_examples(s.train, mode);
      const auto val = make_lm_examples(s.val, mode);
      if (train.empty()) throw DataError("no valid records in the training split");
      Generator g(p.generator, p.lm_train.seed);
      std::cout << "generator parameters: " << g.num_parameters() << "\n";
      const LmReport r = pretrain_lm(g, train, val, p.lm_train);
      save_generator(tl_out, g);
      char buf[128];
      std::snprintf(buf, sizeof buf, "best_val_nll=%.6f final_val_nll=%.6f best_epoch=%d\n",
                    r.best_val_nll, r.final_val_nll, r.best_epoch);
      std::cout << buf;
      return 0;
    }

    if (*ref) {
      check_overwrite(rf_out, rf_force);
      const auto records = read_records(rf_data);
      const EncodingMode mode = encoding_mode(cfg);
      const PipelineConfig p = pipeline_config(cfg);
      Generator g = load_generator(rf_lm);
      Classifier clf = load_classifier(rf_clf);
      const Split s = split(records, p.split_spec);
      const auto train = make_lm_examples(s.train, mode);
      if (train.empty()) throw DataError("no valid records in the training split");
      LossWeights weights;
      const RefineReport r = refine(g, clf, train, weights, p.refine_train);
      save_generator(rf_out, g);
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "steps=%zu lambda1=%.4f lambda2=%.4f last_mean_p_valid=%.4f\n",
                    r.step_l_llm.size(), r.lambda1_final, r.lambda2_final,
                    r.step_mean_p_valid.empty() ? 0.0 : r.step_mean_p_valid.back());
      std::cout << buf;
      return 0;
    }

    if (*smp) {
      if (!sp_encoding.empty()) cfg.set("encoding", sp_encoding);
      Generator g = load_generator(sp_lm);
      const DecodeParams dp = decode_params(cfg);
      Rng rng(sp_seed);
      for (int i = 0; i < sp_n; ++i) {
        const ComponentPool pool = random_pool(rng);
        const std::string prompt = encode_prompt(pool);
        TokenSequence prompt_ids = tokenize(prompt);
        prompt_ids.pop_back();
        const TokenSequence generated = sample(g, prompt_ids, dp, rng);
        std::cout << prompt << "\n" << detokenize(generated) << "\n\n";
      }
      return 0;
    }

    if (*evl) {
      const std::string report_path = ev_out + ".report.tsv";
      const std::string plot_path = ev_out + ".plot.tsv";
      check_overwrite(report_path, ev_force);
      check_overwrite(plot_path, ev_force);
      if (!ev_encoding.empty()) cfg.set("encoding", ev_encoding);
      const EncodingMode mode = encoding_mode(cfg);
      const PipelineConfig p = pipeline_config(cfg);
      Generator g = load_generator(ev_lm);
      Classifier clf = load_classifier(ev_clf);
      const int n_unique = ev_n_unique > 0 ? ev_n_unique : p.n_unique;
      const int64_t max_attempts =
          static_cast<int64_t>(cfg.get_int("eval.max_attempts_factor")) * n_unique;
      const GenerateUniqueResult gen_result =
          generate_unique(g, n_unique, p.decode, max_attempts, mode, ev_seed);
      if (gen_result.samples.empty()) throw DataError("no parseable unique samples generated");
      EvalOptions opts;
      opts.threshold = p.threshold;
      opts.threads = p.threads;
      opts.mode = mode;
      EvalDetails details;
      const EvalReport r = eval_metrics(gen_result, clf, p.sim, opts, &details);
      write_eval_report(report_path, r);
      write_eval_plot_data(plot_path, details);
      std::cout << format_eval_report(r);
      if (gen_result.budget_exhausted) {
        std::cerr << "warning: attempt budget exhausted at " << gen_result.attempts
                  << " attempts with " << gen_result.samples.size() << " uniques\n";
      }
      return 0;
    }

    if (*abl) {
      const std::string table_path = ab_out + ".table.tsv";
      check_overwrite(table_path, ab_force);
      const auto records = read_records(ab_data);
      const PipelineConfig p = pipeline_config(cfg);
      const auto [nl, arr] = ablation_run(records, p, ab_seed);
      const std::string table = format_ablation_table(nl, arr);
      std::ofstream out(table_path, std::ios::binary);
      out << table;
      std::cout << table;
      write_eval_report(ab_out + ".nl.report.tsv", nl.pipeline.refined);
      write_eval_report(ab_out + ".array.report.tsv", arr.pipeline.refined);
      return 0;
    }

    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "parse error (clause " << e.clause << "): " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 2;
  } catch (const UnknownTokenError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateLabels& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const mna::SingularSystem& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const NonScalarLoss& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeMismatch& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
