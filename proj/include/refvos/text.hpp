// SPDX-License-Identifier: Apache-2.0
//
// Referring expressions and their word/sentence embeddings. Two providers:
// a seeded toy table (frozen model parameter) and an external embedding file.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "refvos/parameters.hpp"

namespace refvos {

struct ReferringExpression {
  std::vector<std::string> words;

  // Splits on whitespace and lowercases.
  static ReferringExpression parse(const std::string& text);
  std::string text() const;
  // Throws ConfigError when empty, too long, or a token is not lowercase.
  void validate(std::size_t max_words = 32) const;
};

template <typename Scalar>
struct TextEmbeddings {
  Var<Scalar> words;     // L x C_e
  Var<Scalar> sentence;  // 1 x C_e
};

// Arithmetic mean over the word axis.
template <typename Scalar>
Var<Scalar> pool_sentence(const Var<Scalar>& words);

// External embedding file: "REFEMB1\n", u32 LE vocab size V, u32 LE width C_e,
// then V records of {u16 LE token length, UTF-8 token, C_e f32 LE}.
struct EmbeddingTable {
  int width = 0;
  std::vector<std::string> tokens;
  std::vector<float> values;  // tokens.size() x width, row-major
};

std::string encode_embedding_file(const EmbeddingTable& table);
EmbeddingTable decode_embedding_file(const std::string& bytes);
EmbeddingTable read_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const std::filesystem::path& path, const EmbeddingTable& table);

// Words the toy provider knows; everything else lands in the reserved bucket 0.
const std::vector<std::string>& toy_vocabulary();

template <typename Scalar>
class TextEncoder {
 public:
  TextEncoder() = default;

  // Registers the frozen table "text.table" (vocab x width).
  static TextEncoder toy(ParameterSet<Scalar>& params, int vocab, int width, std::uint64_t hash_seed, Rng& rng);
  static TextEncoder external(const EmbeddingTable& table);

  int width() const { return static_cast<int>(table_.cols()); }
  bool is_toy() const { return toy_; }
  // Table row for a token. Toy: known words hash to [1, vocab), others to 0.
  // External: throws LookupError for a missing token.
  Index row_of(const std::string& token) const;
  const Matrix<Scalar>& table() const { return table_.value(); }

 private:
  Var<Scalar> table_;
  std::unordered_map<std::string, Index> rows_;
  bool toy_ = true;
};

template <typename Scalar>
TextEmbeddings<Scalar> encode_text(const ReferringExpression& expr, const TextEncoder<Scalar>& provider);

extern template class TextEncoder<float>;
extern template class TextEncoder<double>;
extern template Var<float> pool_sentence(const Var<float>&);
extern template Var<double> pool_sentence(const Var<double>&);
extern template TextEmbeddings<float> encode_text(const ReferringExpression&, const TextEncoder<float>&);
extern template TextEmbeddings<double> encode_text(const ReferringExpression&, const TextEncoder<double>&);

}  // namespace refvos
