#pragma once

#include <string>
#include <vector>

#include "reidforge/trainer.hpp"

namespace reidforge {

struct AblateOptions {
  int n_seeds = 5;
  int jobs = 1;
};

struct AblateCell {
  std::string sampler;
  bool centroid = false;
  bool triplet_centroid = false;
  std::vector<double> maps;  // best mAP per seed
  std::vector<double> r1s;
  double map_median = 0.0;
  double r1_median = 0.0;
  bool failed = false;
  std::string error;
};

double median(std::vector<double> values);

// {random, hierarchical} x {triplet, +centroid, +triplet-centroid, +both},
// each cell run over n_seeds seeds; the reported numbers are medians of the
// per-run best mAP / R1. A failing run marks its cell but the other cells
// still complete.
std::vector<AblateCell> run_ablation(const TrainConfig& base,
                                     const Dataset& dataset,
                                     const AblateOptions& options);

std::string ablation_tsv(const std::vector<AblateCell>& cells);

}  // namespace reidforge
