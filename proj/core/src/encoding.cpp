#include "csyn/encoding.hpp"

#include <algorithm>
#include <sstream>

namespace csyn {

const char* encoding_mode_name(EncodingMode m) {
  return m == EncodingMode::NLIncident ? "nl" : "array";
}

std::optional<EncodingMode> encoding_mode_from_name(std::string_view name) {
  if (name == "nl") return EncodingMode::NLIncident;
  if (name == "array") return EncodingMode::Array;
  return std::nullopt;
}

Vocabulary::Vocabulary() {
  auto add = [&](const std::string& w) {
    index_[w] = static_cast<int>(tokens_.size());
    tokens_.push_back(w);
  };
  add("<pad>");  // id 0
  add("<bos>");
  add("<eos>");
  add(";");  // SEP: the array-mode clause separator
  bos_ = 1;
  eos_ = 2;
  sep_ = 3;
  for (const char* kind : {"C", "L", "Sa", "Sb"}) {
    for (int i = 0; i < kPoolSize; ++i) add(std::string(kind) + std::to_string(i));
  }
  add("port");
  add("1");
  add("2");
  add("IN");
  add("OUT");
  add("0");
  for (int i = 1; i <= 11; ++i) add("n" + std::to_string(i));
  for (const char* w : {"Net", "connects", "and", "Generate", "a", "circuit", "topology",
                        "using", "the", "following", "components", ":", ",", "."}) {
    add(w);
  }
}

const Vocabulary& Vocabulary::instance() {
  static const Vocabulary vocab;
  return vocab;
}

int Vocabulary::id_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? -1 : it->second;
}

TokenSequence tokenize(const std::string& text) {
  const Vocabulary& v = Vocabulary::instance();
  TokenSequence seq;
  seq.push_back(v.bos());
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    int id = v.id_of(word);
    if (id < 0) throw UnknownTokenError(word);
    seq.push_back(id);
  }
  seq.push_back(v.eos());
  if (seq.size() > kMaxSequenceLength) {
    throw std::length_error("token sequence exceeds " + std::to_string(kMaxSequenceLength));
  }
  return seq;
}

std::string detokenize(const TokenSequence& seq) {
  const Vocabulary& v = Vocabulary::instance();
  std::string out;
  for (int id : seq) {
    if (id == v.pad() || id == v.bos() || id == v.eos()) continue;
    if (!out.empty()) out.push_back(' ');
    out += v.token(id);
  }
  return out;
}

std::string encode_prompt(const ComponentPool& pool) {
  std::string out = "Generate a circuit topology using the following components :";
  for (int slot = 0; slot < kPoolSize; ++slot) {
    out += " " + pool.instance_name(slot);
    out += slot + 1 < kPoolSize ? " ," : " .";
  }
  return out;
}

namespace {

// Internal nets (no external member, i.e. representative >= 3) are numbered
// n1, n2, ... in order of first appearance over device ports 3..12, which is
// exactly first-use order of the array clauses.
std::array<int, kNumPorts> internal_net_numbers(const Topology& t) {
  std::array<int, kNumPorts> num{};
  num.fill(0);
  int next = 1;
  for (PortId p = 3; p < kNumPorts; ++p) {
    PortId rep = t.net_of(p);
    if (rep >= 3 && num[static_cast<size_t>(rep)] == 0) num[static_cast<size_t>(rep)] = next++;
  }
  return num;
}

std::string net_display_name(PortId rep, const std::array<int, kNumPorts>& internal_num) {
  switch (rep) {
    case kPortGround: return "0";
    case kPortIn: return "IN";
    case kPortOut: return "OUT";
    default: return "n" + std::to_string(internal_num[static_cast<size_t>(rep)]);
  }
}

// Sentence ordering rank: IN, OUT, 0, n1, n2, ...
int net_name_rank(PortId rep, const std::array<int, kNumPorts>& internal_num) {
  switch (rep) {
    case kPortIn: return 0;
    case kPortOut: return 1;
    case kPortGround: return 2;
    default: return 2 + internal_num[static_cast<size_t>(rep)];
  }
}

std::string external_port_name(PortId p) {
  return p == kPortGround ? "0" : (p == kPortIn ? "IN" : "OUT");
}

}  // namespace

std::string encode_topology(const Topology& t, EncodingMode mode) {
  const auto internal_num = internal_net_numbers(t);

  if (mode == EncodingMode::Array) {
    std::vector<std::string> clauses;
    for (int slot = 0; slot < kPoolSize; ++slot) {
      std::string c = t.pool().instance_name(slot);
      c += " " + net_display_name(t.net_of(device_port(slot, 1)), internal_num);
      c += " " + net_display_name(t.net_of(device_port(slot, 2)), internal_num);
      clauses.push_back(std::move(c));
    }
    // Merge clause for a net holding several external ports; without it the
    // array form could not express e.g. IN and OUT being wired together.
    for (PortId rep : t.net_representatives()) {
      std::vector<PortId> ext;
      for (PortId p : t.net_members(rep)) {
        if (is_external_port(p)) ext.push_back(p);
      }
      if (ext.size() >= 2) {
        std::string c = external_port_name(ext[0]);
        for (size_t i = 1; i < ext.size(); ++i) c += " " + external_port_name(ext[i]);
        clauses.push_back(std::move(c));
      }
    }
    std::string out;
    for (size_t i = 0; i < clauses.size(); ++i) {
      if (i) out += " ; ";
      out += clauses[i];
    }
    return out;
  }

  // NLIncident: one sentence per net with at least one mentionable member.
  struct Sentence {
    int rank;
    std::string text;
  };
  std::vector<Sentence> sentences;
  for (PortId rep : t.net_representatives()) {
    std::vector<PortId> members;
    for (PortId p : t.net_members(rep)) {
      if (p == rep && is_external_port(p)) continue;  // name already carries it
      members.push_back(p);
    }
    if (members.empty()) continue;
    std::string s = "Net " + net_display_name(rep, internal_num) + " connects";
    for (size_t i = 0; i < members.size(); ++i) {
      if (i) s += " and";
      PortId p = members[i];
      if (is_external_port(p)) {
        s += " " + external_port_name(p);
      } else {
        s += " " + t.pool().instance_name(port_slot(p)) + " port " +
             std::to_string(port_number(p));
      }
    }
    s += " .";
    sentences.push_back({net_name_rank(rep, internal_num), std::move(s)});
  }
  std::sort(sentences.begin(), sentences.end(),
            [](const Sentence& a, const Sentence& b) { return a.rank < b.rank; });
  std::string out;
  for (size_t i = 0; i < sentences.size(); ++i) {
    if (i) out += " ";
    out += sentences[i].text;
  }
  return out;
}

namespace {

struct NetUnion {
  // 13 ports plus one slot per distinct n-name (n1..n11 -> 13..23).
  std::array<int, kNumPorts + 11> parent;

  NetUnion() {
    for (size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  }
  int find(int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
  }

  Topology build(const ComponentPool& pool) {
    // Union keeps the minimum index as root and ports precede name slots, so
    // the root of any port is itself a port.
    std::map<PortId, PortId> assignment;
    for (PortId p = 0; p < kNumPorts; ++p) assignment[p] = find(p);
    return Topology::create(pool, assignment);
  }
};

// Net-name token -> union key. n-names get slots 13..23.
int net_key(const std::string& word, int clause, bool* is_name) {
  *is_name = true;
  if (word == "0") return kPortGround;
  if (word == "IN") return kPortIn;
  if (word == "OUT") return kPortOut;
  if (word.size() >= 2 && word[0] == 'n') {
    int k = 0;
    for (size_t i = 1; i < word.size(); ++i) {
      if (!isdigit(static_cast<unsigned char>(word[i]))) { *is_name = false; return -1; }
      k = k * 10 + (word[i] - '0');
    }
    if (k >= 1 && k <= 11) return kNumPorts + k - 1;
  }
  *is_name = false;
  (void)clause;
  return -1;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

void check_vocab(const std::vector<std::string>& words, int clause_of_first_word) {
  const Vocabulary& v = Vocabulary::instance();
  for (const auto& w : words) {
    if (v.id_of(w) < 0) {
      throw ParseError(ParseErrorKind::UnknownToken, clause_of_first_word,
                       "unknown token '" + w + "'");
    }
  }
}

Topology parse_array(const std::vector<std::string>& words, const ComponentPool& pool) {
  // Split into clauses on ";".
  std::vector<std::vector<std::string>> clauses(1);
  for (const auto& w : words) {
    if (w == ";") {
      if (clauses.back().empty()) {
        throw ParseError(ParseErrorKind::Truncated, static_cast<int>(clauses.size()),
                         "empty clause");
      }
      clauses.emplace_back();
    } else {
      clauses.back().push_back(w);
    }
  }
  if (clauses.back().empty()) {
    throw ParseError(ParseErrorKind::Truncated, static_cast<int>(clauses.size()),
                     "trailing clause separator");
  }

  NetUnion nets;
  std::array<bool, kPoolSize> seen{};
  for (size_t ci = 0; ci < clauses.size(); ++ci) {
    const auto& clause = clauses[ci];
    const int cnum = static_cast<int>(ci) + 1;
    int slot = pool.slot_of_instance(clause[0]);
    if (slot >= 0) {
      if (clause.size() != 3) {
        throw ParseError(ParseErrorKind::Truncated, cnum,
                         "device clause must be '<inst> <net> <net>'");
      }
      if (seen[static_cast<size_t>(slot)]) {
        throw ParseError(ParseErrorKind::DuplicateDevice, cnum,
                         "device " + clause[0] + " listed twice");
      }
      seen[static_cast<size_t>(slot)] = true;
      for (int which = 1; which <= 2; ++which) {
        bool is_name = false;
        int key = net_key(clause[static_cast<size_t>(which)], cnum, &is_name);
        if (key < 0) {
          throw ParseError(ParseErrorKind::BadNetName, cnum,
                           "'" + clause[static_cast<size_t>(which)] + "' is not a net name");
        }
        nets.unite(device_port(slot, which), key);
      }
    } else if (clause[0] == "0" || clause[0] == "IN" || clause[0] == "OUT") {
      // External merge clause.
      if (clause.size() < 2) {
        throw ParseError(ParseErrorKind::Truncated, cnum, "merge clause needs two externals");
      }
      bool is_name = false;
      int first = net_key(clause[0], cnum, &is_name);
      for (size_t i = 1; i < clause.size(); ++i) {
        if (clause[i] != "0" && clause[i] != "IN" && clause[i] != "OUT") {
          throw ParseError(ParseErrorKind::BadNetName, cnum,
                           "merge clause may only list external ports, got '" + clause[i] + "'");
        }
        nets.unite(first, net_key(clause[i], cnum, &is_name));
      }
    } else if (kind_from_name(clause[0].substr(0, clause[0].find_first_of("0123456789")))) {
      throw ParseError(ParseErrorKind::UnknownToken, cnum,
                       "instance " + clause[0] + " is not in the component pool");
    } else {
      throw ParseError(ParseErrorKind::BadNetName, cnum,
                       "clause must start with a device instance or external port, got '" +
                           clause[0] + "'");
    }
  }
  for (int slot = 0; slot < kPoolSize; ++slot) {
    if (!seen[static_cast<size_t>(slot)]) {
      throw ParseError(ParseErrorKind::MissingDevice, static_cast<int>(clauses.size()),
                       "device " + pool.instance_name(slot) + " missing");
    }
  }
  return nets.build(pool);
}

Topology parse_nl(const std::vector<std::string>& words, const ComponentPool& pool) {
  NetUnion nets;
  std::array<bool, kNumPorts> port_seen{};
  std::vector<int> names_seen;
  size_t i = 0;
  int sentence = 0;
  auto need = [&](const char* what) -> const std::string& {
    if (i >= words.size()) {
      throw ParseError(ParseErrorKind::Truncated, sentence,
                       std::string("sentence ends before ") + what);
    }
    return words[i];
  };
  while (i < words.size()) {
    ++sentence;
    if (words[i] != "Net") {
      throw ParseError(ParseErrorKind::BadNetName, sentence,
                       "sentence must start with 'Net', got '" + words[i] + "'");
    }
    ++i;
    bool is_name = false;
    int key = net_key(need("net name"), sentence, &is_name);
    if (key < 0) {
      throw ParseError(ParseErrorKind::BadNetName, sentence,
                       "'" + words[i] + "' is not a net name");
    }
    if (std::find(names_seen.begin(), names_seen.end(), key) != names_seen.end()) {
      throw ParseError(ParseErrorKind::BadNetName, sentence,
                       "net '" + words[i] + "' appears in more than one sentence");
    }
    names_seen.push_back(key);
    ++i;
    if (need("'connects'") != "connects") {
      throw ParseError(ParseErrorKind::BadNetName, sentence,
                       "expected 'connects', got '" + words[i] + "'");
    }
    ++i;
    while (true) {
      const std::string& w = need("a member");
      int slot = pool.slot_of_instance(w);
      if (slot >= 0) {
        ++i;
        if (need("'port'") != "port") {
          throw ParseError(ParseErrorKind::BadNetName, sentence,
                           "expected 'port', got '" + words[i] + "'");
        }
        ++i;
        const std::string& num = need("port number");
        if (num != "1" && num != "2") {
          throw ParseError(ParseErrorKind::BadNetName, sentence,
                           "port number must be 1 or 2, got '" + num + "'");
        }
        PortId p = device_port(slot, num == "1" ? 1 : 2);
        if (port_seen[static_cast<size_t>(p)]) {
          throw ParseError(ParseErrorKind::DuplicateDevice, sentence,
                           pool.instance_name(slot) + " port " + num + " mentioned twice");
        }
        port_seen[static_cast<size_t>(p)] = true;
        nets.unite(key, p);
        ++i;
      } else if (w == "0" || w == "IN" || w == "OUT") {
        bool dummy = false;
        nets.unite(key, net_key(w, sentence, &dummy));
        ++i;
      } else if (kind_from_name(w.substr(0, w.find_first_of("0123456789")))) {
        throw ParseError(ParseErrorKind::UnknownToken, sentence,
                         "instance " + w + " is not in the component pool");
      } else {
        throw ParseError(ParseErrorKind::BadNetName, sentence,
                         "expected a device port or external, got '" + w + "'");
      }
      const std::string& sepw = need("'and' or '.'");
      if (sepw == ".") {
        ++i;
        break;
      }
      if (sepw != "and") {
        throw ParseError(ParseErrorKind::BadNetName, sentence,
                         "expected 'and' or '.', got '" + sepw + "'");
      }
      ++i;
    }
  }
  for (int slot = 0; slot < kPoolSize; ++slot) {
    bool p1 = port_seen[static_cast<size_t>(device_port(slot, 1))];
    bool p2 = port_seen[static_cast<size_t>(device_port(slot, 2))];
    if (!p1 || !p2) {
      throw ParseError(ParseErrorKind::MissingDevice, sentence,
                       "device " + pool.instance_name(slot) + (p1 || p2 ? " port missing" : " missing"));
    }
  }
  return nets.build(pool);
}

}  // namespace

Topology parse_topology(const std::string& text, const ComponentPool& pool, EncodingMode mode) {
  auto words = split_words(text);
  if (words.empty()) {
    throw ParseError(ParseErrorKind::Truncated, 1, "empty netlist text");
  }
  check_vocab(words, 1);
  return mode == EncodingMode::Array ? parse_array(words, pool) : parse_nl(words, pool);
}

}  // namespace csyn
