// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <regex>
#include <sstream>

#include "commands.hpp"
#include "refvos/config.hpp"
#include "refvos/errors.hpp"
#include "support.hpp"

using namespace refvos;
namespace fs = std::filesystem;

namespace {

const char* const kTinyConfig = R"(# small enough for unit tests
model.patch = 8
model.blocks = 2
model.token_width = 16
model.heads = 2
model.encoder_mlp = 32
model.channels = 32
model.adapter_width = 4
model.taps = 0,1,2
model.text_width = 16
model.text_vocab = 256
model.mlp_hidden = 24
model.decoder_heads = 4
model.decoder_mlp = 32
model.iou_hidden = 16
train.frames = 2
train.steps = 2
train.batch = 2
train.seed = 3
data.clips = 2
data.height = 32
data.width = 32
data.frames = 3
data.min_size = 6
data.max_size = 10
data.speed = 1
)";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "refvos");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path p = dir / "run.cfg";
  write_file(p, std::string(kTinyConfig) + extra);
  return p;
}

std::string tree_bytes(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, root).string() + "\n" + read_file(f);
  return all;
}

}  // namespace

TEST_CASE("config round trip") {
  const RunConfig a = parse_config(read_file(fs::path(REFVOS_SOURCE_DIR) / "configs" / "toy.cfg"));
  CHECK(a.model.encoder.blocks == 4);
  CHECK(a.model.channels() == 32);
  CHECK(a.train.seed == 100);
  CHECK(a.train.optimizer.lr.decoder == 1e-3);
  CHECK(a.eval.tolerance_px < 0);
  const std::string text = serialize_config(a);
  CHECK(serialize_config(parse_config(text)) == text);

  const RunConfig tiny = parse_config(kTinyConfig);
  CHECK(tiny.model.encoder.taps == std::array<int, 3>{0, 1, 2});
  CHECK(parse_model_config(serialize_model_config(tiny.model)).encoder.token_width == 16);

  CHECK_THROWS_AS(parse_config("model.nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.steps = 1\ntrain.steps = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.steps = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("model.da = false\n"), ConfigError);  // hda still on
  CHECK_NOTHROW(parse_config("model.da = false\nmodel.hda = false\n"));
}

TEST_CASE("seed override from the environment") {
  RunConfig cfg = parse_config(kTinyConfig);
  ::setenv("REFVOS_SEED", "77", 1);
  apply_seed_override(cfg);
  CHECK(cfg.train.seed == 77);
  ::setenv("REFVOS_SEED", "x1", 1);
  CHECK_THROWS_AS(apply_seed_override(cfg), ConfigError);
  ::unsetenv("REFVOS_SEED");
  apply_seed_override(cfg);
  CHECK(cfg.train.seed == 77);
}

TEST_CASE("generate writes a deterministic dataset") {
  const auto dir = test::scratch_dir("cli_generate");
  const auto cfg = write_config(dir);
  const Result a = run({"generate", "--config", cfg.string(), "--out", (dir / "a").string()});
  CHECK(a.code == 0);
  CHECK(a.out == "clips=2\n");
  CHECK(fs::exists(dir / "a" / "clip001" / "masks" / "00002.pgm"));
  CHECK(run({"generate", "--config", cfg.string(), "--out", (dir / "b").string()}).code == 0);
  CHECK(tree_bytes(dir / "a") == tree_bytes(dir / "b"));

  write_file(dir / "file", "x");
  CHECK(run({"generate", "--config", cfg.string(), "--out", (dir / "file" / "sub").string()}).code == cli::kIoFailure);
}

TEST_CASE("eval of stored ground truth is perfect") {
  const auto dir = test::scratch_dir("cli_eval");
  const auto cfg = write_config(dir);
  REQUIRE(run({"generate", "--config", cfg.string(), "--out", (dir / "data").string()}).code == 0);
  fs::create_directories(dir / "pred");
  for (const auto& e : fs::directory_iterator(dir / "data")) {
    fs::copy(e.path() / "masks", dir / "pred" / e.path().filename(), fs::copy_options::recursive);
  }
  const Result r = run({"eval", "--data", (dir / "data").string(), "--pred", (dir / "pred").string()});
  CHECK(r.code == 0);
  CHECK(r.out == "J=1.0000 F=1.0000 JF=1.0000\n");
}

TEST_CASE("train, eval, infer and overlay") {
  const auto dir = test::scratch_dir("cli_train");
  const auto cfg = write_config(dir, "train.checkpoint_every = 1\n");
  REQUIRE(run({"generate", "--config", cfg.string(), "--out", (dir / "data").string()}).code == 0);
  const Result t = run({"train", "--config", cfg.string(), "--out-checkpoint", (dir / "m.ckpt").string(), "--log",
                        (dir / "train.log").string()});
  REQUIRE(t.code == 0);
  const std::regex loss_line(R"(step=\d+ dice=[-0-9.]+ focal=[-0-9.]+ iou=[-0-9.]+ total=[-0-9.]+)");
  std::istringstream lines(read_file(dir / "train.log"));
  std::string line;
  int steps = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("step=", 0) == 0) {
      CHECK(std::regex_match(line, loss_line));
      ++steps;
    } else {
      CHECK(std::regex_match(line, std::regex(R"(val J=\d\.\d{4} F=\d\.\d{4} JF=\d\.\d{4})")));
    }
  }
  CHECK(steps == 2);
  CHECK(fs::exists(dir / "m.ckpt.step1"));
  CHECK(fs::exists(dir / "m.ckpt"));

  const Result e = run({"eval", "--checkpoint", (dir / "m.ckpt").string(), "--data", (dir / "data").string()});
  CHECK(e.code == 0);
  CHECK(std::regex_match(e.out, std::regex("J=\\d\\.\\d{4} F=\\d\\.\\d{4} JF=\\d\\.\\d{4}\n")));

  const auto clip = dir / "data" / "clip000";
  const Result i = run({"infer", "--checkpoint", (dir / "m.ckpt").string(), "--clip", clip.string(), "--out",
                        (dir / "pred").string()});
  CHECK(i.code == 0);
  CHECK(read_mask_dir(dir / "pred").size() == 3);
  const Result o = run({"overlay", "--clip", clip.string(), "--masks", (dir / "pred").string(), "--out",
                        (dir / "overlay").string()});
  CHECK(o.code == 0);
  CHECK(fs::exists(dir / "overlay" / "00002.ppm"));
}

TEST_CASE("exit codes") {
  const auto dir = test::scratch_dir("cli_codes");
  const auto cfg = write_config(dir);
  REQUIRE(run({"generate", "--config", cfg.string(), "--out", (dir / "data").string()}).code == 0);

  CHECK(run({}).code == cli::kBadConfig);
  CHECK(run({"generate", "--out", "x"}).code == cli::kBadConfig);
  CHECK(run({"generate", "--config", (dir / "missing.cfg").string(), "--out", "x"}).code == cli::kIoFailure);

  write_file(dir / "bad.cfg", "model.unknown = 1\n");
  CHECK(run({"generate", "--config", (dir / "bad.cfg").string(), "--out", "x"}).code == cli::kBadConfig);

  write_file(dir / "broken.ckpt", "REFSAM1\n\x05");
  CHECK(run({"eval", "--checkpoint", (dir / "broken.ckpt").string(), "--data", (dir / "data").string()}).code ==
        cli::kMalformedFile);

  EmbeddingTable table;
  table.width = 16;
  table.tokens = {"red"};
  table.values.assign(16, 0.5f);
  write_embedding_file(dir / "emb.bin", table);
  write_config(dir, "model.text_embeddings = " + (dir / "emb.bin").string() + "\n");
  const Result missing = run({"train", "--config", cfg.string(), "--out-checkpoint", (dir / "m.ckpt").string()});
  CHECK(missing.code == cli::kMissingToken);
  CHECK(missing.err.find("the") != std::string::npos);

  write_config(dir, "data.shapes = square\ndata.colors = red\ndata.min_objects = 2\n");
  CHECK(run({"generate", "--config", cfg.string(), "--out", (dir / "gen").string()}).code == cli::kGenerationFailure);

  write_config(dir, "train.lr_decoder = 1e30\ntrain.lr_fusion = 1e30\n");
  CHECK(run({"train", "--config", cfg.string(), "--out-checkpoint", (dir / "m.ckpt").string()}).code ==
        cli::kNumericFailure);

  const auto clip = dir / "data" / "clip000";
  fs::create_directories(dir / "two");
  write_mask(dir / "two" / "00000.pgm", Mask(32, 32));
  CHECK(run({"overlay", "--clip", clip.string(), "--masks", (dir / "two").string(), "--out", (dir / "ov").string()})
            .code == cli::kShapeMismatch);
}

TEST_CASE("frame 1 does not depend on the tracking toggle") {
  ModelConfig on = test::tiny_config();
  ModelConfig off = on;
  off.tracking = false;
  Model<double> a(on, 5);
  Model<double> b(off, 5);
  Rng rng(6);
  const VideoClip clip = test::random_clip(2, 32, 32, rng);
  const auto expr = ReferringExpression::parse("the yellow square");
  ClipTrace<double> ta, tb;
  segment_clip(clip, expr, a, {}, &ta);
  segment_clip(clip, expr, b, {}, &tb);
  CHECK(ta.logits[0] == tb.logits[0]);
  CHECK(ta.logits[1] != tb.logits[1]);
}
