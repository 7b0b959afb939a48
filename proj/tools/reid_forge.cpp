// reid-forge: synthetic player re-identification experiments.
//   gen    generate a synthetic dataset
//   train  train an embedding model on a dataset
//   eval   compute retrieval metrics for a checkpoint or embedding file
//   stats  batch composition statistics for a sampler
//   ablate sampler x loss grid with per-cell medians

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "reidforge/ablate.hpp"
#include "reidforge/evaluator.hpp"
#include "reidforge/synthgen.hpp"
#include "reidforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace reidforge;

namespace {

void apply_seed_override(KeyValueConfig& cfg) {
  const char* env = std::getenv("REIDFORGE_SEED");
  if (env && *env) cfg.set("seed", env);
}

void echo_config(const KeyValueConfig& cfg, const std::string& dir,
                 const std::string& name) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(fs::path(dir) / name);
  if (!out) throw DataError("unwritable path: " + dir);
  out << cfg.render();
}

int cmd_gen(const std::string& config_path, const std::string& out_dir) {
  KeyValueConfig cfg = KeyValueConfig::parse_file(config_path);
  apply_seed_override(cfg);
  GenConfig gen_config = parse_gen_config(cfg);
  cfg.ensure_all_consumed();
  Dataset dataset = generate(gen_config);
  save_dataset(dataset, out_dir);
  echo_config(cfg, out_dir, "gen.config");
  std::cout << "samples=" << dataset.samples().size() << "\n"
            << "actions=" << dataset.actions().size() << "\n"
            << "matches=" << dataset.matches().size() << "\n"
            << "out=" << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  KeyValueConfig cfg = KeyValueConfig::parse_file(config_path);
  apply_seed_override(cfg);
  TrainConfig config = parse_train_config(cfg);
  cfg.ensure_all_consumed();
  if (config.dataset_dir.empty()) {
    throw UsageError("train config: missing \"dataset\" key");
  }
  echo_config(cfg, config.out_dir, "train.config");
  RunReport report = train(config);
  std::printf("best_epoch=%d\n", report.best_epoch);
  std::printf("best_map=%.1f\n", report.best_map);
  std::printf("best_r1=%.1f\n", report.best_r1);
  if (!report.best_checkpoint.empty()) {
    std::printf("best_checkpoint=%s\n", report.best_checkpoint.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& dataset_dir, const std::string& checkpoint,
             const std::string& embeddings_path, const std::string& metric_name,
             const std::string& rankings_path) {
  if (checkpoint.empty() == embeddings_path.empty()) {
    throw UsageError("eval: provide exactly one of --checkpoint/--embeddings");
  }
  Dataset dataset = load_dataset(dataset_dir);
  Metric metric = parse_metric(metric_name);
  Matrixd embeddings;
  if (!checkpoint.empty()) {
    EmbeddingNet net = EmbeddingNet::load_checkpoint(checkpoint);
    embeddings = embed_split(net, dataset, Split::Test);
  } else {
    Matrixd stored = load_feature_matrix(embeddings_path);
    // one embedding row per sample, indexed through feature_index
    embeddings = Matrixd::Zero(static_cast<Index>(dataset.samples().size()),
                               stored.cols());
    for (std::size_t i = 0; i < dataset.samples().size(); ++i) {
      std::size_t fi = dataset.samples()[i].feature_index;
      if (fi >= static_cast<std::size_t>(stored.rows())) {
        throw DataError("eval: embeddings file has " +
                        std::to_string(stored.rows()) +
                        " rows, feature_index " + std::to_string(fi) +
                        " is out of range");
      }
      embeddings.row(static_cast<Index>(i)) =
          stored.row(static_cast<Index>(fi));
    }
  }
  EvalReport report = evaluate_split(dataset, embeddings, metric, Split::Test);
  std::printf("map=%.1f\n", report.map);
  std::printf("r1=%.1f\n", report.r1);
  std::printf("n_queries=%d\n", report.n_queries);
  std::printf("n_excluded=%d\n", report.n_excluded);

  if (!rankings_path.empty()) {
    std::ofstream out(rankings_path);
    if (!out) throw DataError("unwritable path: " + rankings_path);
    out << "query_id\trank\tgallery_id\trelevant\tdistance\n";
    const auto& samples = dataset.samples();
    auto actions = index_by_action(dataset);
    for (const auto& action : dataset.actions()) {
      auto it = actions.find(action.action_id);
      if (it == actions.end()) continue;
      std::vector<std::size_t> queries, gallery;
      for (std::size_t q : it->second.query) {
        if (samples[q].split == Split::Test) queries.push_back(q);
      }
      for (std::size_t g : it->second.gallery) {
        if (samples[g].split == Split::Test) gallery.push_back(g);
      }
      if (gallery.empty()) continue;
      Matrixd gallery_embs(static_cast<Index>(gallery.size()),
                           embeddings.cols());
      std::vector<std::string> ids;
      for (std::size_t gi = 0; gi < gallery.size(); ++gi) {
        gallery_embs.row(static_cast<Index>(gi)) =
            embeddings.row(static_cast<Index>(gallery[gi]));
        ids.push_back(samples[gallery[gi]].sample_id);
      }
      for (std::size_t q : queries) {
        std::vector<char> relevance;
        for (std::size_t g : gallery) {
          relevance.push_back(samples[g].player_id == samples[q].player_id);
        }
        RankingResult ranked =
            rank_action(embeddings.row(static_cast<Index>(q)), gallery_embs,
                        metric, samples[q].sample_id, ids, relevance);
        for (std::size_t r = 0; r < ranked.gallery_ids.size(); ++r) {
          out << ranked.query_id << "\t" << r + 1 << "\t"
              << ranked.gallery_ids[r] << "\t" << int(ranked.relevance[r])
              << "\t" << ranked.distances[r] << "\n";
        }
      }
    }
  }
  return 0;
}

int cmd_stats(const std::string& dataset_dir, const std::string& sampler,
              int k, int m, int epochs, std::uint64_t seed) {
  const char* env = std::getenv("REIDFORGE_SEED");
  if (env && *env) seed = std::strtoull(env, nullptr, 10);
  Dataset dataset = load_dataset(dataset_dir);
  BatchSpec spec{k, m};
  std::vector<Batch> batches;
  if (sampler == "random") {
    RandomBatcher batcher(dataset, spec, seed);
    for (int e = 0; e < epochs; ++e) {
      auto epoch = batcher.next_epoch();
      batches.insert(batches.end(), epoch.begin(), epoch.end());
    }
  } else if (sampler == "hier") {
    HierarchicalBatcher batcher(dataset, spec, seed);
    for (int e = 0; e < epochs; ++e) {
      auto epoch = batcher.next_epoch();
      batches.insert(batches.end(), epoch.begin(), epoch.end());
    }
  } else {
    throw UsageError("stats: sampler must be \"random\" or \"hier\"");
  }
  std::cout << batch_stats(batches, dataset).to_key_values();
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir,
               int seeds, int jobs) {
  KeyValueConfig cfg = KeyValueConfig::parse_file(config_path);
  apply_seed_override(cfg);
  TrainConfig base = parse_train_config(cfg);
  cfg.ensure_all_consumed();
  if (base.dataset_dir.empty()) {
    throw UsageError("ablate config: missing \"dataset\" key");
  }
  if (!out_dir.empty()) base.out_dir = out_dir;
  echo_config(cfg, out_dir, "ablate.config");
  Dataset dataset = load_dataset(base.dataset_dir);
  AblateOptions options;
  options.n_seeds = seeds;
  options.jobs = jobs;
  std::string table = ablation_tsv(run_ablation(base, dataset, options));
  std::cout << table;
  if (!out_dir.empty()) {
    std::ofstream out(fs::path(out_dir) / "ablation.tsv");
    if (!out) throw DataError("unwritable path: " + out_dir);
    out << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic player re-identification experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, dataset_dir, checkpoint, embeddings;
  std::string metric = "euclidean", rankings, sampler = "hier";
  int k = 4, m = 8, epochs = 5, seeds = 5, jobs = 1;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "gen config file")->required();
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train an embedding model");
  train_cmd->add_option("--config", config_path, "train config file")
      ->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate retrieval metrics");
  eval_cmd->add_option("--dataset", dataset_dir, "dataset directory")
      ->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint");
  eval_cmd->add_option("--embeddings", embeddings,
                       "RF1 matrix of precomputed embeddings");
  eval_cmd->add_option("--metric", metric, "euclidean|cosine")
      ->check(CLI::IsMember({"euclidean", "cosine"}));
  eval_cmd->add_option("--rankings", rankings, "write per-query rankings TSV");

  auto* stats_cmd = app.add_subcommand("stats", "sampler batch statistics");
  stats_cmd->add_option("--dataset", dataset_dir, "dataset directory")
      ->required();
  stats_cmd->add_option("--sampler", sampler, "random|hier")
      ->check(CLI::IsMember({"random", "hier"}));
  stats_cmd->add_option("--k", k, "samples per identity");
  stats_cmd->add_option("--m", m, "identities per batch");
  stats_cmd->add_option("--epochs", epochs, "epochs to sample");
  stats_cmd->add_option("--seed", seed, "rng seed");

  auto* ablate_cmd =
      app.add_subcommand("ablate", "sampler x loss ablation grid");
  ablate_cmd->add_option("--config", config_path, "base train config file")
      ->required();
  ablate_cmd->add_option("--out", out_dir, "output directory");
  ablate_cmd->add_option("--seeds", seeds, "seeds per cell");
  ablate_cmd->add_option("--jobs", jobs, "concurrent runs");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen(config_path, out_dir);
    if (train_cmd->parsed()) return cmd_train(config_path);
    if (eval_cmd->parsed()) {
      return cmd_eval(dataset_dir, checkpoint, embeddings, metric, rankings);
    }
    if (stats_cmd->parsed()) {
      return cmd_stats(dataset_dir, sampler, k, m, epochs, seed);
    }
    if (ablate_cmd->parsed()) {
      return cmd_ablate(config_path, out_dir, seeds, jobs);
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
}
