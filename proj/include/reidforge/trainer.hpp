#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reidforge/config.hpp"
#include "reidforge/dataset.hpp"
#include "reidforge/evaluator.hpp"
#include "reidforge/losses.hpp"
#include "reidforge/model.hpp"
#include "reidforge/sampler.hpp"

namespace reidforge {

struct TrainConfig {
  std::string dataset_dir;
  std::string out_dir;
  std::string sampler = "hier";  // "random" | "hier"
  BatchSpec batch;
  ModelConfig model;  // input_dim / n_classes of 0 are derived from the data
  LossWeights weights;
  int epochs = 40;
  double lr = 0.05;
  double momentum = 0.9;
  double lr_floor = 0.01;  // lr fraction reached at the end of the schedule
  int checkpoint_period = 5;
  int eval_period = 5;
  Metric metric = Metric::Euclidean;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based in reports
  double lr = 0.0;
  double mean_loss = 0.0;
  double mean_triplet = 0.0;
  double mean_classification = 0.0;
  double mean_centroid = 0.0;
  double mean_triplet_centroid = 0.0;
  std::optional<double> map;  // present on eval epochs
  std::optional<double> r1;
};

struct RunReport {
  std::vector<EpochRecord> epochs;
  double best_map = 0.0;
  double best_r1 = 0.0;
  int best_epoch = -1;
  std::string best_checkpoint;
  std::string final_checkpoint;

  std::string to_tsv() const;
};

// Momentum update over the parameter tensors: v <- momentum*v - lr*grad,
// p <- p + v. Velocities start at zero and persist across calls.
void step(std::vector<Tensor>& params, std::vector<Matrixd>& velocities,
          double lr, double momentum);

// Learning rate for 0-based epoch e: base * (1 - (1 - floor) * e / epochs).
double lr_at_epoch(const TrainConfig& config, int epoch);

// Eval-mode embeddings for every sample of the split, aligned to the
// dataset's sample order; other rows are zero.
Matrixd embed_split(EmbeddingNet& net, const Dataset& dataset, Split split);

RunReport train(const TrainConfig& config, const Dataset& dataset);
RunReport train(const TrainConfig& config);  // loads the dataset first

// Reads every TrainConfig key (struct defaults as fallbacks, except for the
// experiment-scale model defaults documented in the README) so the parsed
// KeyValueConfig can echo the materialized configuration.
TrainConfig parse_train_config(KeyValueConfig& cfg);

}  // namespace reidforge
