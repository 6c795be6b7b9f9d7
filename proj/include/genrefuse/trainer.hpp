#pragma once

// Training loop, evaluation, lambda sweep and checkpoint-driven evaluation.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "genrefuse/checkpoint.hpp"
#include "genrefuse/config.hpp"
#include "genrefuse/data.hpp"
#include "genrefuse/metrics.hpp"
#include "genrefuse/model.hpp"

namespace genrefuse {

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

SplitIndices resolve_split(const RunConfig& config, const Dataset& data);
std::vector<LabelSet> label_sets(const Dataset& data, const std::vector<std::size_t>& indices);
CooccurrenceCounts training_counts(const Dataset& data, const std::vector<std::size_t>& train);

struct EvalOutput {
  MetricsReport report;
  std::vector<float> logits;  // row-major, samples x genres
  std::vector<LabelSet> truth;
  std::vector<LabelSet> predictions;
};

EvalOutput evaluate(const GenreModel<float>& model, const Dataset& data, const std::vector<std::size_t>& indices);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double loss = 0;  // mean over batches
  double bce = 0;
  double alignment = 0;
  double tau = 0;
  double val_accuracy = 0;
  double val_f = 0;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_f = -1;
  EvalOutput test;
  PriorBaseline prior;  // label-prior predictor on the test split, priors from train
  std::filesystem::path checkpoint;
};

struct TrainOptions {
  std::ostream* progress = nullptr;  // one line per epoch when set
};

/// Trains from the config's seed, keeps the best-validation parameters and
/// evaluates them on the test split. Writes config.json, log.csv, best.ckpt
/// and metrics.json under config.out_dir when it is non-empty.
TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& options = {});

std::string epoch_log_csv(const std::vector<EpochLog>& log);

/// Rebuilds the model a checkpoint was saved from.
GenreModel<float> model_from_checkpoint(const Checkpoint& ckpt);
/// Evaluates a checkpoint on one split ("train", "val", "test" or "all") of
/// `data`, after checking the genre vocabularies agree.
EvalOutput evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data, const std::string& split_name);

struct SweepRow {
  double lambda = 0;
  double accuracy = 0;
  double f_measure = 0;
};

/// One training run per lambda; each writes into out_dir/lambda_<value> when
/// out_dir is set, and sweep.csv summarises them.
std::vector<SweepRow> lambda_sweep(const RunConfig& config, const Dataset& data, const std::vector<double>& lambdas,
                                   const TrainOptions& options = {});
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace genrefuse
