#include "biov/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>

#include "biov/biencoder/checkpoint.hpp"
#include "biov/core/digest.hpp"
#include "biov/core/errors.hpp"
#include "biov/core/parallel.hpp"
#include "biov/core/rng.hpp"
#include "biov/datapairs/augment.hpp"
#include "biov/optimizer/optimizer.hpp"

namespace biov {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

TrainConfig default_train_config(Task task, BackboneKind backbone, bool pretrained) {
  TrainConfig c;
  c.task = task;
  c.backbone = backbone;
  c.batch_size = backbone == BackboneKind::tinyvit ? 16 : 50;
  c.base_lr = pretrained ? 5e-5 : 3e-4;
  return c;
}

namespace {

ojson config_json(const TrainConfig& c, bool with_paths) {
  ojson j;
  j["task"] = to_string(c.task);
  j["backbone"] = to_string(c.backbone);
  j["batch_size"] = c.batch_size;
  j["base_lr"] = c.base_lr;
  j["lr_step_epochs"] = c.lr_step_epochs;
  j["lr_gamma"] = c.lr_gamma;
  j["margin"] = c.margin;
  j["convention"] = to_string(c.convention);
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["augment"] = c.augment;
  j["normalize_frequency"] = c.normalize_frequency;
  if (with_paths) {
    j["pairs_dir"] = c.pairs_dir.string();
    j["out_dir"] = c.out_dir.string();
    j["init_iris"] = c.init_iris ? ojson(c.init_iris->string()) : ojson(nullptr);
    j["init_fp"] = c.init_fp ? ojson(c.init_fp->string()) : ojson(nullptr);
  }
  return j;
}

void validate(const TrainConfig& c) {
  if (c.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(c.base_lr >= 0.0) || !std::isfinite(c.base_lr)) throw InvalidArgument("base_lr must be finite and >= 0");
  if (c.lr_step_epochs < 1 || !(c.lr_gamma > 0.0)) throw InvalidArgument("lr schedule needs step >= 1 and gamma > 0");
  if (!(c.margin > 0.0)) throw InvalidArgument("margin must be positive");
  if (c.max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
  if (c.patience < 1) throw InvalidArgument("patience must be >= 1");
  if (c.init_iris.has_value() != c.init_fp.has_value()) {
    throw InvalidArgument("pretrained initialization needs both an iris and a fingerprint checkpoint");
  }
  if (c.init_iris && c.task != Task::cross) throw InvalidArgument("pretrained towers only apply to the cross task");
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) { return config_json(cfg, true).dump(2); }

TrainConfig train_config_from_json(std::string_view text, TrainConfig c, const std::string& source) {
  try {
    const auto j = ojson::parse(text);
    if (!j.is_object()) throw ParseError(source, 0, "config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
      if (key == "task") c.task = parse_task(v.get<std::string>());
      else if (key == "backbone") c.backbone = parse_backbone(v.get<std::string>());
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "base_lr") c.base_lr = v.get<double>();
      else if (key == "lr_step_epochs") c.lr_step_epochs = v.get<int>();
      else if (key == "lr_gamma") c.lr_gamma = v.get<double>();
      else if (key == "margin") c.margin = v.get<double>();
      else if (key == "convention") c.convention = parse_label_convention(v.get<std::string>());
      else if (key == "max_epochs") c.max_epochs = v.get<int>();
      else if (key == "patience") c.patience = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "augment") c.augment = v.get<bool>();
      else if (key == "normalize_frequency") c.normalize_frequency = v.get<bool>();
      else if (key == "pairs_dir") c.pairs_dir = v.get<std::string>();
      else if (key == "out_dir") c.out_dir = v.get<std::string>();
      else if (key == "init_iris") c.init_iris = v.is_null() ? std::nullopt : std::optional<fs::path>(v.get<std::string>());
      else if (key == "init_fp") c.init_fp = v.is_null() ? std::nullopt : std::optional<fs::path>(v.get<std::string>());
      else throw ParseError(source, 0, "unknown config key '" + key + "'");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(source, 0, e.what());
  }
}

std::string train_config_hash(const TrainConfig& cfg) {
  auto j = config_json(cfg, false);
  if (cfg.init_iris) j["init_iris_sha256"] = sha256_file(*cfg.init_iris);
  if (cfg.init_fp) j["init_fp_sha256"] = sha256_file(*cfg.init_fp);
  return sha256_hex(j.dump());
}

std::uint64_t init_seed(const TrainConfig& cfg) { return derive_seed(cfg.seed, {0x1417}); }

std::string epoch_log_to_json(const EpochLog& e) {
  ojson j;
  j["epoch"] = e.epoch;
  j["train_loss"] = e.train_loss;
  j["val_auc"] = e.val_auc;
  j["lr"] = e.lr;
  j["batches"] = e.batches;
  return j.dump();
}

EpochLog epoch_log_from_json(std::string_view line, const std::string& source, std::size_t line_no) {
  try {
    const auto j = ojson::parse(line);
    EpochLog e;
    e.epoch = j.at("epoch").get<int>();
    e.train_loss = j.at("train_loss").get<double>();
    e.val_auc = j.at("val_auc").get<double>();
    e.lr = j.at("lr").get<double>();
    e.batches = j.at("batches").get<std::size_t>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(source, line_no, ex.what());
  }
}

std::vector<EpochLog> read_run_log(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError(file.string(), "cannot open run log");
  std::vector<EpochLog> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty()) out.push_back(epoch_log_from_json(line, file.string(), n));
  }
  return out;
}

namespace {

EncoderMode mode_for(Task t) { return t == Task::cross ? EncoderMode::two_tower : EncoderMode::shared; }

constexpr std::size_t kEmbedChunk = 64;

// Eval-mode embeddings of every distinct image on one side of the pairs.
std::map<std::string, std::vector<float>> embed_side(const BiEncoderModel<float>& model, Tower tower,
                                                     const std::vector<std::string>& paths, const ImageCache& cache) {
  const std::size_t chunks = (paths.size() + kEmbedChunk - 1) / kEmbedChunk;
  std::vector<Tensor<float>> out(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t lo = c * kEmbedChunk, hi = std::min(paths.size(), lo + kEmbedChunk);
    std::vector<Tensor<float>> imgs;
    for (std::size_t i = lo; i < hi; ++i) imgs.push_back(standardize(cache.get(paths[i])));
    out[c] = model.embed(stack<float>(imgs), tower);
  }
  std::map<std::string, std::vector<float>> result;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& t = out[i / kEmbedChunk];
    const std::size_t row = i % kEmbedChunk, d = t.dim(1);
    result.emplace(paths[i], std::vector<float>(t.data() + row * d, t.data() + (row + 1) * d));
  }
  return result;
}

std::vector<std::string> distinct(const PairSet& set, bool side_a) {
  std::set<std::string> s;
  for (const auto& p : set.pairs) s.insert(side_a ? p.a.path : p.b.path);
  return {s.begin(), s.end()};
}

void check_model_task(const BiEncoderModel<float>& model, Task task) {
  const auto& mc = model.config();
  if (!mc.task.empty() && mc.task != to_string(task)) {
    throw MismatchError("model was trained for task '" + mc.task + "', pairs are '" + std::string(to_string(task)) + "'");
  }
  if (mc.mode != mode_for(task)) {
    throw MismatchError("task '" + std::string(to_string(task)) + "' needs a " + std::string(to_string(mode_for(task))) +
                        " model, got " + std::string(to_string(mc.mode)));
  }
}

double val_auc(const BiEncoderModel<float>& model, const PairSet& val, const ImageCache& cache) {
  const auto scored = score_pairs(model, val, cache);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : scored) {
    scores.push_back(s.score);
    labels.push_back(s.label);
  }
  return roc_auc(scores, labels);
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(file.string(), "cannot open for writing");
  return out;
}

}  // namespace

std::vector<ScoredPair> score_pairs(const BiEncoderModel<float>& model, const PairSet& pairs, const ImageCache& cache) {
  if (pairs.pairs.empty()) throw InvalidArgument("cannot score an empty pair set");
  const auto ea = embed_side(model, Tower::A, distinct(pairs, true), cache);
  const auto eb = embed_side(model, Tower::B, distinct(pairs, false), cache);
  std::vector<ScoredPair> out;
  out.reserve(pairs.pairs.size());
  for (const auto& p : pairs.pairs) {
    const auto& x = ea.at(p.a.path);
    const auto& y = eb.at(p.b.path);
    const double d = euclidean_distance<float>(x, y);
    out.push_back({p.a.path, p.b.path, p.label, d, -d});
  }
  return out;
}

EvalReport evaluate(const BiEncoderModel<float>& model, const PairSet& test, const PairSet& val,
                    const ImageCache& cache) {
  if (test.split != SplitName::test) {
    throw InvalidArgument("evaluate reports on the test split, got '" + std::string(to_string(test.split)) + "'");
  }
  if (val.split != SplitName::val) {
    throw InvalidArgument("thresholds come from the validation split, got '" + std::string(to_string(val.split)) + "'");
  }
  if (test.task != val.task) throw MismatchError("test and validation pairs are for different tasks");
  check_model_task(model, test.task);

  const auto val_scored = score_pairs(model, val, cache);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : val_scored) {
    scores.push_back(s.score);
    labels.push_back(s.label);
  }
  const auto tau = select_threshold(scores, labels);
  const double vauc = roc_auc(scores, labels);
  return make_report(std::string(to_string(test.task)), std::string(to_string(model.config().backbone)),
                     score_pairs(model, test, cache), tau, vauc);
}

EvalReport evaluate(const fs::path& checkpoint, const fs::path& pairs_dir) {
  const auto model = load_checkpoint(checkpoint);
  const auto info = read_pairs_info(pairs_dir);
  const auto manifest = read_manifest(info.manifest);
  const auto test = read_pair_set(pair_file(pairs_dir, SplitName::test), manifest);
  const auto val = read_pair_set(pair_file(pairs_dir, SplitName::val), manifest);
  const ImageCache cache(manifest.root, {&test, &val});
  if (cache.height() != model.config().image_size) {
    throw MismatchError("checkpoint expects " + std::to_string(model.config().image_size) + "px images, pairs have " +
                        std::to_string(cache.height()) + "px");
  }
  return evaluate(model, test, val, cache);
}

TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  const auto info = read_pairs_info(cfg.pairs_dir);
  if (info.task != cfg.task) {
    throw MismatchError("pairs directory holds '" + std::string(to_string(info.task)) + "' pairs, config asks for '" +
                        std::string(to_string(cfg.task)) + "'");
  }
  const auto manifest = read_manifest(info.manifest);
  auto train_set = read_pair_set(pair_file(cfg.pairs_dir, SplitName::train), manifest);
  const auto val_set = read_pair_set(pair_file(cfg.pairs_dir, SplitName::val), manifest);
  if (train_set.pairs.empty()) throw InvalidArgument("training pair set is empty");
  if (val_set.pairs.empty()) throw InvalidArgument("validation pair set is empty");
  if (cfg.normalize_frequency) train_set = normalize_frequency(train_set, cfg.seed);
  const ImageCache cache(manifest.root, {&train_set, &val_set});
  if (cache.height() != cache.width()) throw ShapeError("train", {cache.height(), cache.height()}, {cache.height(), cache.width()});

  fs::create_directories(cfg.out_dir);
  const fs::path ckpt_path = cfg.out_dir / "best.ckpt";
  auto log_out = open_out(cfg.out_dir / "runlog.jsonl");

  ModelConfig mc;
  mc.backbone = cfg.backbone;
  mc.mode = mode_for(cfg.task);
  mc.image_size = cache.height();
  mc.task = std::string(to_string(cfg.task));
  mc.config_hash = train_config_hash(cfg);
  auto model = BiEncoderModel<float>::initialized(mc, init_seed(cfg));
  if (cfg.init_iris) init_from_pretrained(model, *cfg.init_iris, *cfg.init_fp);

  const bool frozen = cfg.base_lr == 0.0;
  const StepDecaySchedule schedule{cfg.base_lr, cfg.lr_step_epochs, cfg.lr_gamma};
  const ContrastiveLossCfg loss_cfg{cfg.margin, cfg.convention};
  AdamState<float> adam(model.params());
  EarlyStopTracker tracker(cfg.patience);

  TrainResult result{model.clone(), {}, ckpt_path};
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch)});
    const double lr = frozen ? 0.0 : lr_at(schedule, epoch);
    const auto seq = batches(train_set, cache, cfg.batch_size, epoch_seed, cfg.augment);
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      const auto batch = seq[k];
      PairStep<float> step;
      try {
        step = pair_step(model, batch.a, batch.b, batch.labels, loss_cfg, Mode::train);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + " batch " + std::to_string(k), e.what());
      }
      loss_sum += step.loss;
      if (!frozen) {
        try {
          adam_step(adam, model.params(), step.grads, lr);
        } catch (const NumericalError& e) {
          throw NumericalError("epoch " + std::to_string(epoch) + " batch " + std::to_string(k), e.what());
        }
        apply_buffer_updates(model.params(), std::move(step.updates));
      }
    }

    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(seq.size());
    e.val_auc = val_auc(model, val_set, cache);
    e.lr = lr;
    e.batches = seq.size();
    result.log.epochs.push_back(e);
    log_out << epoch_log_to_json(e) << '\n' << std::flush;
    if (on_epoch) on_epoch(e);

    const auto decision = tracker.observe(epoch, e.val_auc);
    if (*tracker.best_epoch() == epoch) result.best = model.clone();
    if (decision == StopDecision::stop) {
      result.log.stopped_early = true;
      break;
    }
  }
  if (!log_out) throw IoError((cfg.out_dir / "runlog.jsonl").string(), "write failed");

  result.log.best_epoch = *tracker.best_epoch();
  result.log.best_val_auc = *tracker.best_metric();
  save_checkpoint(result.best, ckpt_path);
  result.log.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ojson summary;
  summary["best_epoch"] = result.log.best_epoch;
  summary["best_val_auc"] = result.log.best_val_auc;
  summary["epochs_run"] = result.log.epochs.size();
  summary["stopped_early"] = result.log.stopped_early;
  summary["config_hash"] = mc.config_hash;
  write_file(cfg.out_dir / "train_summary.json", summary.dump(2) + "\n");
  return result;
}

}  // namespace biov
