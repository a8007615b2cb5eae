#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "csyn/topology.hpp"

namespace csyn {

// The two textual netlist grammars: the natural-language incident form
// (one sentence per net) and the compact array form (one clause per device).
enum class EncodingMode { NLIncident, Array };

const char* encoding_mode_name(EncodingMode m);
std::optional<EncodingMode> encoding_mode_from_name(std::string_view name);

// Closed word-level vocabulary shared by both grammars and the prompt
// template. Token ids are stable: PAD is always id 0.
class Vocabulary {
 public:
  static const Vocabulary& instance();

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_[static_cast<size_t>(id)]; }
  // -1 when the word is not in the vocabulary.
  int id_of(std::string_view word) const;

  int pad() const { return 0; }
  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int sep() const { return sep_; }  // surface form ";"

 private:
  Vocabulary();
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int bos_ = 0, eos_ = 0, sep_ = 0;
};

// Token ids over the closed vocabulary. Sequences produced by tokenize()
// are wrapped as BOS ... EOS and never exceed kMaxSequenceLength.
using TokenSequence = std::vector<int>;
inline constexpr int kMaxSequenceLength = 96;

struct UnknownTokenError : std::runtime_error {
  explicit UnknownTokenError(const std::string& word)
      : std::runtime_error("unknown token: " + word), word(word) {}
  std::string word;
};

// Splits on single spaces, maps each word to its id, wraps with BOS/EOS.
TokenSequence tokenize(const std::string& text);
// Drops BOS/EOS/PAD and joins the remaining tokens with single spaces.
std::string detokenize(const TokenSequence& seq);

// `Generate a circuit topology using the following components : C0 , C1 , ... .`
std::string encode_prompt(const ComponentPool& pool);

// Renders a topology in the requested grammar. Deterministic: the same
// topology always yields byte-identical text.
//
// Array mode: one clause per device in pool order, `C0 IN n1 ; L0 n1 OUT`;
// internal nets are named n1, n2, ... in first-use order and nets holding an
// external port are named by their representative (0 / IN / OUT). A net that
// contains two or more external ports additionally emits a trailing merge
// clause listing those externals (`... ; IN OUT`), which keeps the grammar
// lossless when externals share a net.
//
// NLIncident mode: one sentence per net with at least one device port or
// merged external, in net-name order IN, OUT, 0, n1, ...:
// `Net IN connects C0 port 1 and Sa0 port 1 .` Non-representative external
// members appear by name: `Net IN connects OUT and C0 port 1 .`
std::string encode_topology(const Topology& t, EncodingMode mode);

enum class ParseErrorKind { UnknownToken, MissingDevice, DuplicateDevice, BadNetName, Truncated };

struct ParseError : std::runtime_error {
  ParseError(ParseErrorKind kind, int clause, const std::string& what)
      : std::runtime_error(what), kind(kind), clause(clause) {}
  ParseErrorKind kind;
  int clause;  // 1-based index of the first offending clause/sentence
};

// Inverse of encode_topology. Token-level syntax is strict; clause order,
// member order and the particular n-names used are accepted as long as they
// are consistent, so parse(text) equals parse(canonical re-encoding of text).
Topology parse_topology(const std::string& text, const ComponentPool& pool, EncodingMode mode);

}  // namespace csyn
