// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <memory>
#include <ostream>

#include "refvos/checkpoint.hpp"
#include "refvos/config.hpp"
#include "refvos/errors.hpp"

namespace refvos::cli {

namespace fs = std::filesystem;

namespace {

RunConfig load_run_config(const fs::path& path) {
  RunConfig cfg = load_config(path);
  apply_seed_override(cfg);
  return cfg;
}

Dataset load_or_generate(const RunConfig& cfg) {
  if (!cfg.data.root.empty()) return read_dataset(cfg.data.root);
  return generate_dataset(cfg.synthetic_spec(), cfg.data.clips);
}

std::optional<EmbeddingTable> external_text(const ModelConfig& cfg) {
  if (cfg.text_embeddings.empty()) return std::nullopt;
  return read_embedding_file(cfg.text_embeddings);
}

std::unique_ptr<Model<float>> load_model(const fs::path& checkpoint) {
  const auto records = read_checkpoint(checkpoint);
  const ModelConfig mc = checkpoint_model_config(records);
  const auto table = external_text(mc);
  auto model = std::make_unique<Model<float>>(mc, 0, table ? &*table : nullptr);
  load_parameters(records, *model);
  return model;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

}  // namespace

int cmd_generate(const fs::path& config, const fs::path& out_dir, std::ostream& out) {
  const RunConfig cfg = load_run_config(config);
  const Dataset data = generate_dataset(cfg.synthetic_spec(), cfg.data.clips);
  write_dataset(out_dir, data);
  out << "clips=" << data.size() << "\n";
  return kOk;
}

int cmd_train(const TrainOptions& options, std::ostream& out) {
  const RunConfig cfg = load_run_config(options.config);
  const Dataset data = load_or_generate(cfg);
  if (data.empty()) throw ConfigError("no training clips");
  const auto table = external_text(cfg.model);
  Model<float> model(cfg.model, seeds::init(cfg.train.seed), table ? &*table : nullptr);
  AdamW<float> optimizer(model.parameters(), cfg.train.optimizer);
  Rng rng(seeds::sampling(cfg.train.seed));

  std::ofstream log;
  if (options.log) {
    log.open(*options.log, std::ios::app);
    if (!log) throw IoError("cannot open log file " + options.log->string());
  }
  std::size_t cursor = 0;
  for (int step = 1; step <= cfg.train.steps; ++step) {
    std::vector<const Sample*> batch;
    for (int b = 0; b < cfg.train.batch; ++b) batch.push_back(&data[cursor++ % data.size()]);
    const LossReport report = train_step(model, optimizer, batch, cfg.train, rng);
    const std::string line = format_loss_line(step, report);
    out << line << "\n";
    if (log) log << line << "\n" << std::flush;
    if (cfg.train.checkpoint_every > 0 && step % cfg.train.checkpoint_every == 0 && step != cfg.train.steps) {
      save_checkpoint(options.checkpoint.string() + ".step" + std::to_string(step), model);
    }
  }
  save_checkpoint(options.checkpoint, model);
  const std::string val = "val " + format_metrics(evaluate_model(model, data, cfg.eval.tolerance_px));
  out << val << "\n";
  if (log) log << val << "\n";
  return kOk;
}

int cmd_eval(const std::optional<fs::path>& config, const std::optional<fs::path>& checkpoint, const fs::path& data_dir,
             const std::optional<fs::path>& predictions, std::ostream& out) {
  const RunConfig cfg = config ? load_run_config(*config) : RunConfig{};
  const Dataset data = read_dataset(data_dir);
  Metrics m;
  if (predictions) {
    std::vector<Metrics> per;
    for (const auto& s : data) {
      if (s.masks.empty()) continue;
      per.push_back(evaluate_sequence(read_mask_dir(*predictions / s.id), s.masks, cfg.eval.tolerance_px));
    }
    m = average_metrics(per);
  } else {
    if (!checkpoint) throw ConfigError("eval needs --checkpoint or --pred");
    m = evaluate_model(*load_model(*checkpoint), data, cfg.eval.tolerance_px);
  }
  out << format_metrics(m) << "\n";
  return kOk;
}

int cmd_infer(const fs::path& checkpoint, const fs::path& clip, const std::optional<std::string>& expression,
              const std::optional<fs::path>& out_dir, std::ostream& out) {
  const auto model = load_model(checkpoint);
  Sample s = read_sample(clip);
  if (expression) s.expression = ReferringExpression::parse(*expression);
  if (s.expression.words.empty()) throw ConfigError("no referring expression given and none stored with the clip");
  const MaskSequence masks = segment_clip(s.frames, s.expression, *model);
  const fs::path dir = out_dir ? *out_dir : clip / "pred";
  write_mask_dir(dir, masks);
  out << "frames=" << masks.size() << " out=" << dir.string() << "\n";
  return kOk;
}

int cmd_overlay(const fs::path& clip, const fs::path& masks_dir, const fs::path& out_dir, std::ostream& out) {
  const Sample s = read_sample(clip);
  const MaskSequence masks = read_mask_dir(masks_dir);
  if (masks.size() != s.frames.size()) {
    throw DimensionError(std::to_string(masks.size()) + " masks for " + std::to_string(s.frames.size()) + " frames");
  }
  ensure_dir(out_dir);
  for (std::size_t t = 0; t < masks.size(); ++t) {
    Image frame = s.frames[t];
    const Mask& m = masks[t];
    if (m.height != frame.height || m.width != frame.width) throw DimensionError("mask and frame differ in size");
    for (int y = 0; y < frame.height; ++y) {
      for (int x = 0; x < frame.width; ++x) {
        if (!m.at(y, x)) continue;
        frame.at(0, y, x) = 0.5f * frame.at(0, y, x) + 0.5f;
        frame.at(1, y, x) *= 0.5f;
        frame.at(2, y, x) *= 0.5f;
      }
    }
    write_image(out_dir / frame_file_name(t, ".ppm"), frame);
  }
  out << "frames=" << masks.size() << "\n";
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"referring video object segmentation toolkit"};
  app.require_subcommand(1);

  std::string config, out_dir, checkpoint, data, clip, masks;
  std::string log, pred, expr, infer_out;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  gen->add_option("--config", config, "run configuration")->required();
  gen->add_option("--out", out_dir, "output dataset root")->required();

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config)->required();
  train->add_option("--out-checkpoint", checkpoint)->required();
  train->add_option("--log", log, "append loss lines to this file");

  auto* eval = app.add_subcommand("eval", "print J, F and J&F over a dataset");
  eval->add_option("--config", config);
  eval->add_option("--checkpoint", checkpoint);
  eval->add_option("--data", data)->required();
  eval->add_option("--pred", pred, "score stored predictions instead of running a model");

  auto* infer = app.add_subcommand("infer", "segment one clip");
  infer->add_option("--checkpoint", checkpoint)->required();
  infer->add_option("--clip", clip)->required();
  infer->add_option("--expr", expr, "referring expression");
  infer->add_option("--out", infer_out, "mask output directory");

  auto* overlay = app.add_subcommand("overlay", "tint mask regions on the clip frames");
  overlay->add_option("--clip", clip)->required();
  overlay->add_option("--masks", masks)->required();
  overlay->add_option("--out", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kBadConfig;
  }

  auto opt_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
  try {
    if (*gen) return cmd_generate(config, out_dir, out);
    if (*train) return cmd_train({config, checkpoint, opt_path(log)}, out);
    if (*eval) return cmd_eval(opt_path(config), opt_path(checkpoint), data, opt_path(pred), out);
    if (*infer) {
      return cmd_infer(checkpoint, clip, expr.empty() ? std::nullopt : std::optional<std::string>(expr),
                       opt_path(infer_out), out);
    }
    if (*overlay) return cmd_overlay(clip, masks, out_dir, out);
  } catch (const LookupError& e) {
    err << "error: " << e.what() << "\n";
    return kMissingToken;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kMalformedFile;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kShapeMismatch;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const GenerationError& e) {
    err << "error: " << e.what() << "\n";
    return kGenerationFailure;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  return kBadConfig;
}

}  // namespace refvos::cli
