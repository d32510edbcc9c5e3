// SPDX-License-Identifier: Apache-2.0
#include "refvos/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "refvos/errors.hpp"

namespace refvos {

namespace {

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + value + "'");
  return out;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

Field int_field(const std::string& key, int& ref) {
  return {key, [&ref] { return format_number(ref); }, [&ref, key](const std::string& v) { ref = parse_number<int>(key, v); }};
}

Field u64_field(const std::string& key, std::uint64_t& ref) {
  return {key, [&ref] { return format_number(ref); },
          [&ref, key](const std::string& v) { ref = parse_number<std::uint64_t>(key, v); }};
}

Field real_field(const std::string& key, double& ref) {
  return {key, [&ref] { return format_number(ref); },
          [&ref, key](const std::string& v) { ref = parse_number<double>(key, v); }};
}

Field bool_field(const std::string& key, bool& ref) {
  return {key, [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, key](const std::string& v) { ref = parse_bool(key, v); }};
}

Field string_field(const std::string& key, std::string& ref) {
  return {key, [&ref] { return ref; }, [&ref](const std::string& v) { ref = v; }};
}

template <typename E>
Field enum_list_field(const std::string& key, std::vector<E>& ref, const std::vector<E>& all,
                      std::string (*name)(E)) {
  return {key,
          [&ref, name] {
            std::string out;
            for (std::size_t i = 0; i < ref.size(); ++i) out += (i ? "," : "") + name(ref[i]);
            return out;
          },
          [&ref, all, name, key](const std::string& v) {
            ref.clear();
            for (const auto& item : split_list(v)) {
              bool found = false;
              for (E e : all) {
                if (name(e) == item) {
                  ref.push_back(e);
                  found = true;
                }
              }
              if (!found) throw ConfigError(key + ": unknown value '" + item + "'");
            }
          }};
}

void add_model_fields(std::vector<Field>& f, ModelConfig& m) {
  auto& e = m.encoder;
  f.push_back(int_field("model.patch", e.patch_size));
  f.push_back(int_field("model.blocks", e.blocks));
  f.push_back(int_field("model.token_width", e.token_width));
  f.push_back(int_field("model.heads", e.heads));
  f.push_back(int_field("model.encoder_mlp", e.mlp_width));
  f.push_back(int_field("model.channels", e.channels));
  f.push_back(int_field("model.adapter_width", e.adapter_width));
  f.push_back({"model.taps",
               [&e] {
                 return format_number(e.taps[0]) + "," + format_number(e.taps[1]) + "," + format_number(e.taps[2]);
               },
               [&e](const std::string& v) {
                 const auto items = split_list(v);
                 if (items.size() != 3) throw ConfigError("model.taps: expected three comma-separated indices");
                 for (std::size_t i = 0; i < 3; ++i) e.taps[i] = parse_number<int>("model.taps", items[i]);
               }});
  f.push_back(bool_field("model.adapter", e.adapters));
  f.push_back(int_field("model.text_width", m.text_width));
  f.push_back(int_field("model.text_vocab", m.text_vocab));
  f.push_back(int_field("model.text_hash_seed", m.text_hash_seed));
  f.push_back(string_field("model.text_embeddings", m.text_embeddings));
  f.push_back(int_field("model.max_words", m.max_words));
  f.push_back(int_field("model.mlp_hidden", m.mlp_hidden));
  f.push_back(int_field("model.decoder_layers", m.decoder.layers));
  f.push_back(int_field("model.decoder_heads", m.decoder.heads));
  f.push_back(int_field("model.decoder_mlp", m.decoder.mlp_width));
  f.push_back(int_field("model.decoder_downsample", m.decoder.attention_downsample));
  f.push_back(int_field("model.iou_hidden", m.decoder.iou_hidden));
  f.push_back(bool_field("model.sentence_token", m.decoder.sentence_token));
  f.push_back(bool_field("model.cross_modal_mlp", m.cross_modal_mlp));
  f.push_back(bool_field("model.da", m.dense_attention));
  f.push_back(bool_field("model.hda", m.hierarchical));
  f.push_back(bool_field("model.itm", m.tracking));
}

std::vector<Field> run_fields(RunConfig& c) {
  std::vector<Field> f;
  add_model_fields(f, c.model);
  auto& t = c.train;
  f.push_back(int_field("train.frames", t.frames));
  f.push_back(int_field("train.steps", t.steps));
  f.push_back(int_field("train.batch", t.batch));
  f.push_back(u64_field("train.seed", t.seed));
  f.push_back(bool_field("train.detach_track", t.detach_track));
  f.push_back(int_field("train.checkpoint_every", t.checkpoint_every));
  f.push_back(real_field("train.w_dice", t.loss.w_dice));
  f.push_back(real_field("train.w_focal", t.loss.w_focal));
  f.push_back(real_field("train.w_iou", t.iou_weight));
  f.push_back(real_field("train.focal_alpha", t.loss.focal_alpha));
  f.push_back(real_field("train.focal_gamma", t.loss.focal_gamma));
  f.push_back(real_field("train.dice_smooth", t.loss.dice_smooth));
  f.push_back(real_field("train.lr_cross_modal", t.optimizer.lr.cross_modal));
  f.push_back(real_field("train.lr_fusion", t.optimizer.lr.fusion));
  f.push_back(real_field("train.lr_decoder", t.optimizer.lr.decoder));
  f.push_back(real_field("train.lr_adapter", t.optimizer.lr.adapter));
  f.push_back(real_field("train.lr_itm", t.optimizer.lr.tracking));
  f.push_back(real_field("train.beta1", t.optimizer.beta1));
  f.push_back(real_field("train.beta2", t.optimizer.beta2));
  f.push_back(real_field("train.adam_eps", t.optimizer.eps));
  f.push_back(real_field("train.weight_decay", t.optimizer.weight_decay));
  auto& d = c.data;
  auto& s = d.synthetic;
  f.push_back(string_field("data.root", d.root));
  f.push_back(int_field("data.clips", d.clips));
  f.push_back(int_field("data.height", s.height));
  f.push_back(int_field("data.width", s.width));
  f.push_back(int_field("data.frames", s.frames));
  f.push_back(int_field("data.min_objects", s.min_objects));
  f.push_back(int_field("data.max_objects", s.max_objects));
  f.push_back(int_field("data.min_size", s.min_size));
  f.push_back(int_field("data.max_size", s.max_size));
  f.push_back(int_field("data.speed", s.speed));
  f.push_back(enum_list_field<Shape>("data.shapes", s.shapes, {Shape::kSquare, Shape::kCircle, Shape::kTriangle},
                                     shape_name));
  f.push_back(enum_list_field<Color>("data.colors", s.colors,
                                     {Color::kRed, Color::kGreen, Color::kBlue, Color::kYellow}, color_name));
  f.push_back(enum_list_field<Motion>(
      "data.motions", s.motions, {Motion::kLeft, Motion::kRight, Motion::kUp, Motion::kDown, Motion::kStatic},
      motion_name));
  f.push_back({"eval.tolerance_px",
               [&c] { return c.eval.tolerance_px < 0.0 ? std::string("auto") : format_number(c.eval.tolerance_px); },
               [&c](const std::string& v) {
                 if (v == "auto") {
                   c.eval.tolerance_px = -1.0;
                   return;
                 }
                 const double t = parse_number<double>("eval.tolerance_px", v);
                 if (t < 0.0) throw ConfigError("eval.tolerance_px must be >= 0 or auto");
                 c.eval.tolerance_px = t;
               }});
  return f;
}

// Applies "key = value" lines to the fields. Returns the keys that were set.
std::set<std::string> apply_lines(const std::string& text, std::vector<Field>& fields) {
  std::map<std::string, Field*> by_key;
  for (auto& field : fields) by_key[field.key] = &field;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    it->second->set(value);
  }
  return seen;
}

std::string write_lines(const std::vector<Field>& fields) {
  std::string out;
  std::string section;
  for (const auto& field : fields) {
    const std::string s = field.key.substr(0, field.key.find('.'));
    if (!section.empty() && s != section) out += "\n";
    section = s;
    out += field.key + " = " + field.get() + "\n";
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  data.synthetic.validate();
  if (data.clips < 0) throw ConfigError("data.clips must be >= 0");
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s = data.synthetic;
  s.seed = seeds::data(train.seed);
  return s;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  auto fields = run_fields(cfg);
  const auto seen = apply_lines(text, fields);
  if (seen.count("model.taps") == 0) cfg.model.encoder.taps = VisualEncoderConfig::default_taps(cfg.model.encoder.blocks);
  cfg.validate();
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  return write_lines(run_fields(copy));
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string serialize_model_config(const ModelConfig& cfg) {
  ModelConfig copy = cfg;
  std::vector<Field> fields;
  add_model_fields(fields, copy);
  return write_lines(fields);
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg;
  std::vector<Field> fields;
  add_model_fields(fields, cfg);
  const auto seen = apply_lines(text, fields);
  if (seen.count("model.taps") == 0) cfg.encoder.taps = VisualEncoderConfig::default_taps(cfg.encoder.blocks);
  cfg.validate();
  return cfg;
}

void apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv("REFVOS_SEED");
  if (!env || !*env) return;
  cfg.train.seed = parse_number<std::uint64_t>("REFVOS_SEED", env);
}

}  // namespace refvos
