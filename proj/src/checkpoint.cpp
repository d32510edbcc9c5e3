// SPDX-License-Identifier: Apache-2.0
#include "refvos/checkpoint.hpp"

#include <cstring>

#include "refvos/config.hpp"
#include "refvos/errors.hpp"

namespace refvos {

namespace {

constexpr char kMagic[] = "REFSAM1\n";
constexpr std::size_t kMagicSize = 8;
const std::string kConfigRecord = "meta.config";

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw ParseError(std::string("truncated checkpoint while reading ") + what, pos_);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u(std::size_t n, const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(n, what));
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::string out(kMagic, kMagicSize);
  for (const auto& r : records) {
    if (r.name.empty() || r.name.size() > 0xffff) throw DomainError("checkpoint record name length out of range");
    if (r.shape.size() > 0xff) throw DomainError("checkpoint record rank out of range");
    std::size_t count = 1;
    for (auto e : r.shape) count *= e;
    if (count != r.values.size()) throw DimensionError("checkpoint record " + r.name + ": extents do not match values");
    put_u16(out, static_cast<std::uint16_t>(r.name.size()));
    out += r.name;
    out.push_back(static_cast<char>(r.shape.size()));
    for (auto e : r.shape) put_u32(out, e);
    for (float v : r.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_u32(out, bits);
    }
  }
  return out;
}

std::vector<CheckpointRecord> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicSize || bytes.compare(0, kMagicSize, kMagic) != 0) {
    throw ParseError("not a checkpoint file (bad magic)", 0);
  }
  Reader in(bytes);
  in.take(kMagicSize, "magic");
  std::vector<CheckpointRecord> out;
  while (!in.done()) {
    CheckpointRecord r;
    const std::size_t start = in.offset();
    const std::uint32_t len = in.u(2, "name length");
    if (len == 0) throw ParseError("empty record name", start);
    r.name.assign(in.take(len, "name"), len);
    const std::uint32_t rank = in.u(1, "rank");
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.shape.push_back(in.u(4, "extent"));
      count *= r.shape.back();
    }
    if (count > (bytes.size() - in.offset()) / 4) {
      throw ParseError("record " + r.name + " claims more values than the file holds", in.offset());
    }
    r.values.resize(static_cast<std::size_t>(count));
    for (auto& v : r.values) {
      const std::uint32_t bits = in.u(4, "value");
      std::memcpy(&v, &bits, sizeof v);
    }
    out.push_back(std::move(r));
  }
  return out;
}

template <typename Scalar>
std::vector<CheckpointRecord> checkpoint_records(const Model<Scalar>& model) {
  std::vector<CheckpointRecord> out;
  const std::string text = serialize_model_config(model.config());
  CheckpointRecord meta{kConfigRecord, {static_cast<std::uint32_t>(text.size())}, {}};
  for (unsigned char c : text) meta.values.push_back(static_cast<float>(c));
  out.push_back(std::move(meta));
  for (const auto& p : model.parameters().all()) {
    CheckpointRecord r{p.name, p.shape, {}};
    const auto& v = p.var.value();
    r.values.reserve(static_cast<std::size_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) r.values.push_back(static_cast<float>(v.data()[i]));
    out.push_back(std::move(r));
  }
  return out;
}

ModelConfig checkpoint_model_config(const std::vector<CheckpointRecord>& records) {
  for (const auto& r : records) {
    if (r.name != kConfigRecord) continue;
    std::string text;
    for (float v : r.values) {
      if (!(v >= 0.0f && v <= 255.0f) || v != static_cast<float>(static_cast<int>(v))) {
        throw ParseError("meta.config holds a value that is not a byte", 0);
      }
      text.push_back(static_cast<char>(static_cast<int>(v)));
    }
    try {
      return parse_model_config(text);
    } catch (const ConfigError& e) {
      throw ParseError(std::string("meta.config: ") + e.what(), 0);
    }
  }
  throw ParseError("checkpoint has no meta.config record", 0);
}

template <typename Scalar>
void load_parameters(const std::vector<CheckpointRecord>& records, Model<Scalar>& model) {
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (auto& p : model.parameters().all()) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ParseError("checkpoint lacks parameter " + p.name, 0);
    const CheckpointRecord& r = *it->second;
    if (r.shape != p.shape) throw DimensionError("checkpoint parameter " + p.name + " has the wrong shape");
    auto& v = p.var.mutable_value();
    for (Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<Scalar>(r.values[static_cast<std::size_t>(i)]);
  }
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Model<Scalar>& model) {
  write_file(path, encode_checkpoint(checkpoint_records(model)));
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

template std::vector<CheckpointRecord> checkpoint_records(const Model<float>&);
template std::vector<CheckpointRecord> checkpoint_records(const Model<double>&);
template void load_parameters(const std::vector<CheckpointRecord>&, Model<float>&);
template void load_parameters(const std::vector<CheckpointRecord>&, Model<double>&);
template void save_checkpoint(const std::filesystem::path&, const Model<float>&);
template void save_checkpoint(const std::filesystem::path&, const Model<double>&);

}  // namespace refvos
