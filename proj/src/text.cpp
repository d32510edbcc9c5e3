// SPDX-License-Identifier: Apache-2.0
#include "refvos/text.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <sstream>

#include "refvos/image.hpp"
#include "refvos/ops.hpp"

namespace refvos {

ReferringExpression ReferringExpression::parse(const std::string& text) {
  ReferringExpression expr;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    expr.words.push_back(word);
  }
  return expr;
}

std::string ReferringExpression::text() const {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

void ReferringExpression::validate(std::size_t max_words) const {
  if (words.empty()) throw ConfigError("referring expression has no words");
  if (words.size() > max_words) {
    throw ConfigError("referring expression has " + std::to_string(words.size()) + " words, limit is " +
                      std::to_string(max_words));
  }
  for (const auto& w : words) {
    if (w.empty()) throw ConfigError("empty token in referring expression");
    for (const char c : w) {
      if (std::isupper(static_cast<unsigned char>(c))) throw ConfigError("token is not lowercase: " + w);
    }
  }
}

template <typename Scalar>
Var<Scalar> pool_sentence(const Var<Scalar>& words) {
  if (words.rows() == 0) throw DimensionError("pool_sentence: no words");
  return mean_rows(words);
}

// ---------------------------------------------------------------------------
// Embedding file
// ---------------------------------------------------------------------------

namespace {

constexpr char kEmbeddingMagic[] = "REFEMB1\n";

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw ParseError(std::string("truncated ") + what, pos_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[pos_]) |
                                              (static_cast<unsigned char>(bytes_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_embedding_file(const EmbeddingTable& table) {
  if (table.values.size() != table.tokens.size() * static_cast<std::size_t>(table.width)) {
    throw DimensionError("embedding table value count does not match tokens x width");
  }
  std::string out(kEmbeddingMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(table.tokens.size()));
  put_u32(out, static_cast<std::uint32_t>(table.width));
  for (std::size_t t = 0; t < table.tokens.size(); ++t) {
    const auto& token = table.tokens[t];
    if (token.size() > 0xFFFF) throw DimensionError("token longer than 65535 bytes");
    put_u16(out, static_cast<std::uint16_t>(token.size()));
    out += token;
    for (int c = 0; c < table.width; ++c) {
      put_u32(out, std::bit_cast<std::uint32_t>(table.values[t * table.width + c]));
    }
  }
  return out;
}

EmbeddingTable decode_embedding_file(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kEmbeddingMagic, 8) != 0) {
    throw ParseError("not an embedding file (bad magic)", 0);
  }
  Reader in(bytes);
  in.str(8, "magic");
  const std::uint32_t vocab = in.u32("vocab size");
  const std::size_t width_at = in.pos();
  const std::uint32_t width = in.u32("width");
  if (width == 0) throw ParseError("embedding width must be positive", width_at);
  EmbeddingTable table;
  table.width = static_cast<int>(width);
  for (std::uint32_t t = 0; t < vocab; ++t) {
    const std::uint16_t len = in.u16("token length");
    table.tokens.push_back(in.str(len, "token"));
    for (std::uint32_t c = 0; c < width; ++c) table.values.push_back(in.f32("embedding values"));
  }
  if (!in.done()) throw ParseError("trailing bytes after embedding records", in.pos());
  return table;
}

EmbeddingTable read_embedding_file(const std::filesystem::path& path) {
  return decode_embedding_file(read_file(path));
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingTable& table) {
  write_file(path, encode_embedding_file(table));
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

const std::vector<std::string>& toy_vocabulary() {
  static const std::vector<std::string> words = {
      "the",    "a",      "an",     "static", "moving", "left",   "right",  "up",     "down",   "red",
      "green",  "blue",   "yellow", "square", "circle", "triangle", "object", "shape", "is",   "on",
      "of",     "to",     "and",    "in",     "at",     "small",  "big",    "large",  "top",    "bottom",
      "center", "white",  "black",  "orange", "purple", "pink",   "brown",  "gray",   "person", "dog",
      "cat",    "car",    "bird",   "horse",  "man",    "woman",  "with",   "that",   "which",  "near",
  };
  return words;
}

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

template <typename Scalar>
TextEncoder<Scalar> TextEncoder<Scalar>::toy(ParameterSet<Scalar>& params, int vocab, int width,
                                             std::uint64_t hash_seed, Rng& rng) {
  if (vocab < 2 || width <= 0) throw ConfigError("toy text encoder needs vocab >= 2 and width > 0");
  const auto& words = toy_vocabulary();
  if (words.size() >= static_cast<std::size_t>(vocab)) throw ConfigError("toy vocabulary table too small");
  TextEncoder enc;
  enc.toy_ = true;
  enc.table_ = params.add("text.table", ModuleTag::kText,
                          {static_cast<std::uint32_t>(vocab), static_cast<std::uint32_t>(width)}, Init::kNormal, rng,
                          1.0);
  std::vector<bool> taken(static_cast<std::size_t>(vocab), false);
  taken[0] = true;
  for (const auto& w : words) {
    auto slot = static_cast<Index>(1 + fnv1a(w, hash_seed) % static_cast<std::uint64_t>(vocab - 1));
    while (taken[static_cast<std::size_t>(slot)]) slot = 1 + slot % (vocab - 1);
    taken[static_cast<std::size_t>(slot)] = true;
    enc.rows_.emplace(w, slot);
  }
  return enc;
}

template <typename Scalar>
TextEncoder<Scalar> TextEncoder<Scalar>::external(const EmbeddingTable& table) {
  if (table.width <= 0 || table.values.size() != table.tokens.size() * static_cast<std::size_t>(table.width)) {
    throw DimensionError("malformed embedding table");
  }
  TextEncoder enc;
  enc.toy_ = false;
  Matrix<Scalar> values(static_cast<Index>(table.tokens.size()), table.width);
  for (Index i = 0; i < values.size(); ++i) values.data()[i] = static_cast<Scalar>(table.values[static_cast<std::size_t>(i)]);
  enc.table_ = Var<Scalar>(std::move(values), false);
  for (std::size_t t = 0; t < table.tokens.size(); ++t) enc.rows_.emplace(table.tokens[t], static_cast<Index>(t));
  return enc;
}

template <typename Scalar>
Index TextEncoder<Scalar>::row_of(const std::string& token) const {
  const auto it = rows_.find(token);
  if (it != rows_.end()) return it->second;
  if (toy_) return 0;
  throw LookupError(token);
}

template <typename Scalar>
TextEmbeddings<Scalar> encode_text(const ReferringExpression& expr, const TextEncoder<Scalar>& provider) {
  if (expr.words.empty()) throw DimensionError("encode_text: expression has no words");
  Matrix<Scalar> words(static_cast<Index>(expr.words.size()), provider.width());
  for (std::size_t l = 0; l < expr.words.size(); ++l) {
    words.row(static_cast<Index>(l)) = provider.table().row(provider.row_of(expr.words[l]));
  }
  TextEmbeddings<Scalar> out;
  out.words = constant(std::move(words));
  out.sentence = pool_sentence(out.words);
  return out;
}

template class TextEncoder<float>;
template class TextEncoder<double>;
template Var<float> pool_sentence(const Var<float>&);
template Var<double> pool_sentence(const Var<double>&);
template TextEmbeddings<float> encode_text(const ReferringExpression&, const TextEncoder<float>&);
template TextEmbeddings<double> encode_text(const ReferringExpression&, const TextEncoder<double>&);

}  // namespace refvos
