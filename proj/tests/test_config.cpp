#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "csyn/config.hpp"

using namespace csyn;

TEST_CASE("defaults are registered and typed") {
  Config cfg;
  CHECK(cfg.get_int("sim.steps_per_period") == 100);
  CHECK(cfg.get_double("train.lr") == doctest::Approx(3e-4));
  CHECK(cfg.get_int("decode.top_k") == 40);
  CHECK(cfg.get_string("encoding") == "nl");
  CHECK(cfg.get_u64("train.seed") == 42);
}

TEST_CASE("load_text parses sections, comments and whitespace") {
  Config cfg;
  cfg.load_text("# comment\n"
                "sim.steps_per_period = 200\n"
                "train.lr=0.001  # inline comment\n"
                "\n"
                "decode.top_p=0.9\n");
  CHECK(cfg.get_int("sim.steps_per_period") == 200);
  CHECK(cfg.get_double("train.lr") == doctest::Approx(0.001));
  CHECK(cfg.get_double("decode.top_p") == doctest::Approx(0.9));
}

TEST_CASE("unknown keys are rejected with the offending line") {
  Config cfg;
  try {
    cfg.load_text("sim.steps_per_period=100\nnot.a.key=1\n", "test.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("test.cfg:2") != std::string::npos);
    CHECK(msg.find("not.a.key") != std::string::npos);
  }
}

TEST_CASE("malformed lines and values") {
  Config cfg;
  CHECK_THROWS_AS(cfg.load_text("just words\n"), ConfigError);
  cfg.set("train.lr", "abc");
  CHECK_THROWS_AS(cfg.get_double("train.lr"), ConfigError);
  cfg.set("train.epochs", "2.5");
  CHECK_THROWS_AS(cfg.get_int("train.epochs"), ConfigError);
}

TEST_CASE("documentation lists every key with its default") {
  Config cfg;
  const std::string doc = cfg.documentation();
  CHECK(doc.find("sim.steps_per_period=100") != std::string::npos);
  CHECK(doc.find("eval.n_unique=200") != std::string::npos);
  CHECK(doc.find("#") != std::string::npos);
}
