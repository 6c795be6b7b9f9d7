#include "genrefuse/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "genrefuse/optim.hpp"
#include "json.hpp"

namespace genrefuse {

namespace fs = std::filesystem;

SplitIndices resolve_split(const RunConfig& config, const Dataset& data) {
  std::vector<std::string> ids;
  for (const auto& s : data.samples) ids.push_back(s.id);
  const auto s = split(ids, config.split_ratios(), config.train.split_seed);
  return {data.indices_of(s.train), data.indices_of(s.val), data.indices_of(s.test)};
}

std::vector<LabelSet> label_sets(const Dataset& data, const std::vector<std::size_t>& indices) {
  std::vector<LabelSet> out;
  out.reserve(indices.size());
  for (const auto i : indices) out.push_back(data.samples.at(i).genres);
  return out;
}

CooccurrenceCounts training_counts(const Dataset& data, const std::vector<std::size_t>& train) {
  return count_cooccurrence(label_sets(data, train), data.genre_names.size());
}

EvalOutput evaluate(const GenreModel<float>& model, const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InputError("evaluate: empty split");
  const auto& cfg = model.config();
  NoGradGuard no_grad;
  EvalOutput out;
  for (std::size_t start = 0; start < indices.size(); start += cfg.train.batch_size) {
    const std::vector<std::size_t> idx(
        indices.begin() + static_cast<std::ptrdiff_t>(start),
        indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), start + cfg.train.batch_size)));
    const auto batch = make_batch<float>(data, idx, cfg.model.lyric_length);
    const auto logits = model.forward(batch.mels, batch.tokens).logits;
    out.logits.insert(out.logits.end(), logits.data().begin(), logits.data().end());
    const auto pred = predictions_from_logits(logits, cfg.train.threshold);
    out.predictions.insert(out.predictions.end(), pred.begin(), pred.end());
  }
  out.truth = label_sets(data, indices);
  out.report = compute_metrics(out.truth, out.predictions, data.genre_names.size(), cfg.train.threshold);
  return out;
}

namespace {

std::vector<std::vector<float>> snapshot(const ParameterSet<float>& params) {
  std::vector<std::vector<float>> out;
  for (const auto& e : params.entries()) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

void restore(ParameterSet<float>& params, const std::vector<std::vector<float>>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = params.entries()[i].tensor;
    std::copy(values[i].begin(), values[i].end(), dst.mutable_data().begin());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string describe_step(std::size_t epoch, std::size_t step, double lr, double lambda) {
  std::ostringstream ss;
  ss << "epoch " << epoch + 1 << ", step " << step + 1 << ", lr " << lr << ", lambda " << lambda;
  return ss.str();
}

}  // namespace

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream ss;
  ss << "epoch,lr,loss,bce,alignment,tau,val_accuracy,val_f,seconds\n" << std::setprecision(9);
  for (const auto& e : log) {
    ss << e.epoch << ',' << e.lr << ',' << e.loss << ',' << e.bce << ',' << e.alignment << ',' << e.tau << ','
       << e.val_accuracy << ',' << e.val_f << ',' << e.seconds << '\n';
  }
  return ss.str();
}

TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  if (data.samples.empty()) throw InputError("train: dataset is empty");
  const auto sp = resolve_split(config, data);
  if (sp.train.empty() || sp.val.empty() || sp.test.empty()) {
    throw InputError("train: every split needs at least one sample (train " + std::to_string(sp.train.size()) +
                     ", val " + std::to_string(sp.val.size()) + ", test " + std::to_string(sp.test.size()) + ")");
  }
  GenreModel<float> model(config, data.genre_names, data.vocab.size(), training_counts(data, sp.train));
  OptimizerConfig oc;
  oc.kind = parse_optimizer_kind(config.train.optimizer);
  oc.learning_rate = config.train.lr;
  oc.halve_every = config.train.halve_every;
  Optimizer<float> opt(oc, model.optimized_params());
  const double lambda = config.effective_lambda();

  const bool write = !config.out_dir.empty();
  const fs::path out_dir = config.out_dir;
  if (write) {
    fs::create_directories(out_dir);
    config.save(out_dir / "config.json");
  }

  TrainResult result;
  std::vector<std::vector<float>> best;
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = scheduled_learning_rate(config.train.lr, epoch, config.train.halve_every);
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.lr = lr;
    const auto groups = batch_indices(sp.train.size(), config.train.batch_size, config.seed, epoch);
    for (std::size_t step = 0; step < groups.size(); ++step) {
      std::vector<std::size_t> idx;
      for (const auto g : groups[step]) idx.push_back(sp.train[g]);
      const auto batch = make_batch<float>(data, idx, config.model.lyric_length);
      try {
        const auto losses = model.loss(batch);
        if (!std::isfinite(losses.total.item())) throw NumericError("loss is not finite");
        losses.total.backward();
        entry.loss += losses.total.item();
        entry.bce += losses.bce.item();
        if (losses.alignment.defined()) entry.alignment += losses.alignment.item();
      } catch (const NumericError& e) {
        throw NumericError("training diverged at " + describe_step(epoch, step, lr, lambda) + ": " + e.what());
      }
      opt.step(epoch);
      opt.zero_grad();
    }
    const auto steps = static_cast<double>(groups.size());
    entry.loss /= steps;
    entry.bce /= steps;
    entry.alignment /= steps;
    entry.tau = model.temperature().item();
    const auto val = evaluate(model, data, sp.val).report;
    entry.val_accuracy = val.accuracy;
    entry.val_f = val.f_measure;
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (options.progress != nullptr) {
      *options.progress << "epoch " << entry.epoch << " loss " << std::fixed << std::setprecision(6) << entry.loss
                        << " bce " << entry.bce << " val_f " << std::setprecision(4) << entry.val_f << " ("
                        << std::setprecision(1) << entry.seconds << "s)" << std::defaultfloat << std::endl;
    }

    if (entry.val_f > result.best_val_f) {
      result.best_val_f = entry.val_f;
      result.best_epoch = entry.epoch;
      best = snapshot(model.params());
      since_best = 0;
    } else if (config.train.patience > 0 && ++since_best >= config.train.patience) {
      break;
    }
  }

  if (!best.empty()) restore(model.params(), best);
  result.test = evaluate(model, data, sp.test);
  result.prior = label_prior_baseline(label_priors(label_sets(data, sp.train), data.genre_names.size()),
                                      result.test.truth);
  if (write) {
    result.checkpoint = out_dir / "best.ckpt";
    save_checkpoint(result.checkpoint,
                    {config, data.genre_names, data.vocab.size(), result.best_epoch, result.best_val_f},
                    model.params());
    write_text(out_dir / "log.csv", epoch_log_csv(result.log));
    auto report = nlohmann::ordered_json::parse(result.test.report.to_json(data.genre_names));
    report["split"] = "test";
    report["best_epoch"] = result.best_epoch;
    report["best_val_f_measure"] = result.best_val_f;
    report["label_prior_baseline"] = {{"accuracy", result.prior.accuracy}, {"f_measure", result.prior.f_measure}};
    write_text(out_dir / "metrics.json", report.dump(2) + "\n");
  }
  return result;
}

GenreModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  CooccurrenceCounts empty;
  empty.num_genres = ckpt.meta.genre_names.size();
  empty.n.assign(empty.num_genres, 0);
  empty.m.assign(empty.num_genres * empty.num_genres, 0);
  GenreModel<float> model(ckpt.meta.config, ckpt.meta.genre_names, ckpt.meta.vocab_size, empty);
  restore_parameters(ckpt, model.params());
  return model;
}

EvalOutput evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data, const std::string& split_name) {
  if (ckpt.meta.genre_names != data.genre_names) {
    throw ConfigError("genre vocabulary of the dataset (" + std::to_string(data.genre_names.size()) +
                      " genres) does not match the checkpoint (" + std::to_string(ckpt.meta.genre_names.size()) +
                      " genres)");
  }
  if (ckpt.meta.vocab_size != data.vocab.size()) {
    throw ConfigError("token vocabulary size " + std::to_string(data.vocab.size()) + " does not match checkpoint (" +
                      std::to_string(ckpt.meta.vocab_size) + ")");
  }
  const auto model = model_from_checkpoint(ckpt);
  const auto sp = resolve_split(ckpt.meta.config, data);
  if (split_name == "train") return evaluate(model, data, sp.train);
  if (split_name == "val") return evaluate(model, data, sp.val);
  if (split_name == "test") return evaluate(model, data, sp.test);
  if (split_name == "all") {
    std::vector<std::size_t> all(data.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return evaluate(model, data, all);
  }
  throw ConfigError("unknown split '" + split_name + "' (expected train, val, test or all)");
}

std::vector<SweepRow> lambda_sweep(const RunConfig& config, const Dataset& data, const std::vector<double>& lambdas,
                                   const TrainOptions& options) {
  for (const double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("sweep: lambda " + std::to_string(l) + " outside [0, 1]");
  }
  std::vector<SweepRow> rows;
  for (const double l : lambdas) {
    RunConfig c = config;
    c.loss.lambda = l;
    if (!config.out_dir.empty()) {
      std::ostringstream name;
      name << "lambda_" << l;
      c.out_dir = (fs::path(config.out_dir) / name.str()).string();
    }
    const auto r = train(c, data, options);
    rows.push_back({l, r.test.report.accuracy, r.test.report.f_measure});
  }
  if (!config.out_dir.empty()) write_text(fs::path(config.out_dir) / "sweep.csv", sweep_csv(rows));
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream ss;
  ss << "lambda,accuracy,f_measure\n" << std::setprecision(9);
  for (const auto& r : rows) ss << r.lambda << ',' << r.accuracy << ',' << r.f_measure << '\n';
  return ss.str();
}

}  // namespace genrefuse
