#include "reidforge/ablate.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <sstream>
#include <thread>

namespace reidforge {

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median: no values");
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

struct RunSlot {
  double map = 0.0;
  double r1 = 0.0;
  bool failed = false;
  std::string error;
};

std::string cell_tag(const AblateCell& cell) {
  std::string tag = cell.sampler;
  tag += cell.centroid ? "_cen" : "_nocen";
  tag += cell.triplet_centroid ? "_tc" : "_notc";
  return tag;
}

}  // namespace

std::vector<AblateCell> run_ablation(const TrainConfig& base,
                                     const Dataset& dataset,
                                     const AblateOptions& options) {
  if (options.n_seeds < 1) throw DataError("ablate: n_seeds must be >= 1");
  if (options.jobs < 1) throw DataError("ablate: jobs must be >= 1");

  const double gamma_on = base.weights.gamma > 0 ? base.weights.gamma : 0.5;
  const double delta_on = base.weights.delta > 0 ? base.weights.delta : 0.5;

  std::vector<AblateCell> cells;
  for (const char* sampler : {"random", "hier"}) {
    for (int combo = 0; combo < 4; ++combo) {
      AblateCell cell;
      cell.sampler = sampler;
      cell.centroid = combo & 1;
      cell.triplet_centroid = combo & 2;
      cells.push_back(cell);
    }
  }

  struct Unit {
    std::size_t cell;
    int seed_index;
  };
  std::vector<Unit> units;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (int s = 0; s < options.n_seeds; ++s) units.push_back({c, s});
  }
  std::vector<RunSlot> slots(units.size());

  auto run_unit = [&](std::size_t u) {
    const Unit& unit = units[u];
    const AblateCell& cell = cells[unit.cell];
    TrainConfig config = base;
    config.sampler = cell.sampler;
    config.weights.gamma = cell.centroid ? gamma_on : 0.0;
    config.weights.delta = cell.triplet_centroid ? delta_on : 0.0;
    config.seed = base.seed + static_cast<std::uint64_t>(unit.seed_index);
    config.model.init_seed =
        base.model.init_seed + static_cast<std::uint64_t>(unit.seed_index);
    if (!base.out_dir.empty()) {
      config.out_dir = (std::filesystem::path(base.out_dir) / cell_tag(cell) /
                        ("seed" + std::to_string(unit.seed_index)))
                           .string();
    }
    try {
      RunReport report = train(config, dataset);
      slots[u].map = report.best_map;
      slots[u].r1 = report.best_r1;
    } catch (const std::exception& e) {
      slots[u].failed = true;
      slots[u].error = e.what();
    }
  };

  if (options.jobs == 1) {
    for (std::size_t u = 0; u < units.size(); ++u) run_unit(u);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    int n_workers = std::min<int>(options.jobs, static_cast<int>(units.size()));
    for (int w = 0; w < n_workers; ++w) {
      workers.emplace_back([&]() {
        while (true) {
          std::size_t u = next.fetch_add(1);
          if (u >= units.size()) return;
          run_unit(u);
        }
      });
    }
    for (auto& t : workers) t.join();
  }

  for (std::size_t u = 0; u < units.size(); ++u) {
    AblateCell& cell = cells[units[u].cell];
    if (slots[u].failed) {
      cell.failed = true;
      if (!cell.error.empty()) cell.error += "; ";
      cell.error += "seed " + std::to_string(units[u].seed_index) + ": " +
                    slots[u].error;
    } else {
      cell.maps.push_back(slots[u].map);
      cell.r1s.push_back(slots[u].r1);
    }
  }
  for (auto& cell : cells) {
    if (!cell.failed) {
      cell.map_median = median(cell.maps);
      cell.r1_median = median(cell.r1s);
    }
  }
  return cells;
}

std::string ablation_tsv(const std::vector<AblateCell>& cells) {
  std::ostringstream os;
  os << "sampler\ttriplet\tcentroid\ttriplet_centroid\tmap\tr1\n";
  os.setf(std::ios::fixed);
  os.precision(1);
  for (const auto& cell : cells) {
    os << cell.sampler << "\t1\t" << (cell.centroid ? 1 : 0) << "\t"
       << (cell.triplet_centroid ? 1 : 0) << "\t";
    if (cell.failed) {
      os << "error\terror\t# " << cell.error << "\n";
    } else {
      os << cell.map_median << "\t" << cell.r1_median << "\n";
    }
  }
  return os.str();
}

}  // namespace reidforge
