#include "reidforge/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace reidforge {

void TrainConfig::validate() const {
  if (epochs < 1) throw DataError("train config: epochs must be >= 1");
  if (!(lr >= 0)) throw DataError("train config: lr must be non-negative");
  if (momentum < 0 || momentum >= 1) {
    throw DataError("train config: momentum must lie in [0, 1)");
  }
  if (lr_floor < 0 || lr_floor > 1) {
    throw DataError("train config: lr_floor must lie in [0, 1]");
  }
  if (checkpoint_period < 1 || eval_period < 1) {
    throw DataError("train config: periods must be >= 1");
  }
  if (sampler != "random" && sampler != "hier") {
    throw DataError("train config: sampler must be \"random\" or \"hier\"");
  }
  batch.validate();
  weights.validate();
}

void step(std::vector<Tensor>& params, std::vector<Matrixd>& velocities,
          double lr, double momentum) {
  if (velocities.empty()) {
    for (const auto& p : params) {
      velocities.push_back(Matrixd::Zero(p.rows(), p.cols()));
    }
  }
  if (velocities.size() != params.size()) {
    throw ShapeError("step: velocity count does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrixd& g = params[i].grad();
    if (!g.allFinite()) {
      throw NumericError("step: non-finite gradient in parameter block " +
                         std::to_string(i));
    }
    velocities[i] = momentum * velocities[i] - lr * g;
    params[i].mutable_value() += velocities[i];
  }
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  return config.lr *
         (1.0 - (1.0 - config.lr_floor) * double(epoch) / double(config.epochs));
}

Matrixd embed_split(EmbeddingNet& net, const Dataset& dataset, Split split) {
  std::vector<std::size_t> rows = dataset.split_sample_indices(split);
  Matrixd out =
      Matrixd::Zero(static_cast<Index>(dataset.samples().size()),
                    net.config().embedding_dim);
  if (rows.empty()) return out;
  Matrixd x(static_cast<Index>(rows.size()), dataset.feature_dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = dataset.features().row(
        static_cast<Index>(dataset.samples()[rows[i]].feature_index));
  }
  ForwardResult fwd = net.forward(Tensor(x), ForwardMode::Eval);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(rows[i])) =
        fwd.embeddings.value().row(static_cast<Index>(i));
  }
  return out;
}

namespace {

// shortest decimal form that parses back to the same double
std::string format_double(double v) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), v);
  (void)ec;
  return std::string(buffer, end);
}

}  // namespace

std::string RunReport::to_tsv() const {
  std::ostringstream os;
  os << "epoch\tlr\tloss\ttriplet\tclassification\tcentroid\ttriplet_"
        "centroid\tmap\tr1\n";
  for (const auto& e : epochs) {
    os << e.epoch << "\t" << format_double(e.lr) << "\t"
       << format_double(e.mean_loss) << "\t" << format_double(e.mean_triplet)
       << "\t" << format_double(e.mean_classification) << "\t"
       << format_double(e.mean_centroid) << "\t"
       << format_double(e.mean_triplet_centroid) << "\t"
       << (e.map ? format_double(*e.map) : "-") << "\t"
       << (e.r1 ? format_double(*e.r1) : "-") << "\n";
  }
  return os.str();
}

RunReport train(const TrainConfig& config) {
  Dataset dataset = load_dataset(config.dataset_dir);
  return train(config, dataset);
}

TrainConfig parse_train_config(KeyValueConfig& cfg) {
  TrainConfig out;
  out.dataset_dir = cfg.get_string("dataset", "");
  out.out_dir = cfg.get_string("out", "");
  out.sampler = cfg.get_string("sampler", out.sampler);
  out.batch.k = cfg.get_int("k", out.batch.k);
  out.batch.m = cfg.get_int("m", out.batch.m);
  out.epochs = cfg.get_int("epochs", out.epochs);
  out.lr = cfg.get_double("lr", out.lr);
  out.momentum = cfg.get_double("momentum", out.momentum);
  out.lr_floor = cfg.get_double("lr_floor", out.lr_floor);
  out.checkpoint_period = cfg.get_int("checkpoint_period", out.checkpoint_period);
  out.eval_period = cfg.get_int("eval_period", out.eval_period);
  out.metric = parse_metric(cfg.get_string("metric", to_string(out.metric)));
  out.seed = cfg.get_u64("seed", out.seed);

  out.model.input_dim =
      static_cast<Index>(cfg.get_int("input_dim", 0));  // 0 = derive
  out.model.hidden_dims = cfg.get_index_list("hidden_dims", {64});
  // desk-scale experiment default; 512 is the published embedding width
  out.model.embedding_dim = static_cast<Index>(cfg.get_int("embedding_dim", 32));
  out.model.n_classes = static_cast<Index>(cfg.get_int("n_classes", 0));
  std::uint64_t init_seed = cfg.get_u64("init_seed", 0);
  out.model.init_seed = init_seed == 0 ? out.seed : init_seed;

  out.weights.alpha = cfg.get_double("alpha", out.weights.alpha);
  out.weights.beta = cfg.get_double("beta", out.weights.beta);
  out.weights.gamma = cfg.get_double("gamma", out.weights.gamma);
  out.weights.delta = cfg.get_double("delta", out.weights.delta);
  out.weights.margin = cfg.get_double("margin", out.weights.margin);
  out.weights.margin_tc = cfg.get_double("margin_tc", out.weights.margin_tc);
  std::string mode = cfg.get_string("centroid_mode", "separation");
  if (mode == "separation") {
    out.weights.centroid_mode = CentroidMode::Separation;
  } else if (mode == "as_written") {
    out.weights.centroid_mode = CentroidMode::AsWritten;
  } else {
    throw UsageError("train config: centroid_mode must be \"separation\" or "
                     "\"as_written\"");
  }
  out.weights.separation_margin =
      cfg.get_double("separation_margin", out.weights.separation_margin);
  return out;
}

RunReport train(const TrainConfig& config, const Dataset& dataset) {
  config.validate();
  namespace fs = std::filesystem;
  if (!config.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec || !fs::is_directory(config.out_dir)) {
      throw DataError("unwritable path: " + config.out_dir);
    }
  }

  // classes = distinct train-split identities, in sorted id order
  std::vector<int> train_ids = dataset.split_player_ids(Split::Train);
  if (train_ids.empty()) throw DataError("train: empty train split");
  std::map<int, int> class_of;
  for (std::size_t i = 0; i < train_ids.size(); ++i) {
    class_of[train_ids[i]] = static_cast<int>(i);
  }

  ModelConfig model_config = config.model;
  if (model_config.input_dim == 0) model_config.input_dim = dataset.feature_dim();
  if (model_config.input_dim != dataset.feature_dim()) {
    throw DataError("train: model input_dim " +
                    std::to_string(model_config.input_dim) +
                    " does not match feature dim " +
                    std::to_string(dataset.feature_dim()));
  }
  if (model_config.n_classes == 0) {
    model_config.n_classes = static_cast<Index>(train_ids.size());
  }
  if (model_config.n_classes < static_cast<Index>(train_ids.size())) {
    throw DataError("train: n_classes smaller than the number of train ids");
  }
  EmbeddingNet net = EmbeddingNet::init(model_config);
  std::vector<Tensor> params = net.parameters();
  std::vector<Matrixd> velocities;

  std::unique_ptr<RandomBatcher> random_batcher;
  std::unique_ptr<HierarchicalBatcher> hier_batcher;
  if (config.sampler == "random") {
    random_batcher =
        std::make_unique<RandomBatcher>(dataset, config.batch, config.seed);
  } else {
    hier_batcher =
        std::make_unique<HierarchicalBatcher>(dataset, config.batch, config.seed);
  }

  RunReport report;
  auto evaluate_now = [&]() {
    Matrixd embeddings = embed_split(net, dataset, Split::Test);
    return evaluate_split(dataset, embeddings, config.metric, Split::Test);
  };
  std::vector<std::string> history;
  auto sidecar = [&](int epoch) {
    std::vector<std::string> lines{"epoch=" + std::to_string(epoch)};
    lines.insert(lines.end(), history.begin(), history.end());
    return lines;
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = lr_at_epoch(config, epoch);
    std::vector<Batch> batches = random_batcher
                                     ? random_batcher->next_epoch()
                                     : hier_batcher->next_epoch();
    EpochRecord record;
    record.epoch = epoch + 1;
    record.lr = lr;
    int n_batches = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      Matrixd x(static_cast<Index>(batch.entries.size()),
                dataset.feature_dim());
      std::vector<int> labels;
      for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        const Sample& s = dataset.samples()[batch.entries[i].sample];
        x.row(static_cast<Index>(i)) =
            dataset.features().row(static_cast<Index>(s.feature_index));
        labels.push_back(class_of.at(s.player_id));
      }
      ForwardResult fwd = net.forward(Tensor(x), ForwardMode::Train);
      CombinedLoss<double> loss =
          combined_loss(fwd.embeddings, fwd.logits, labels, config.weights);
      double value = loss.total.scalar();
      if (!std::isfinite(value)) {
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch + 1) + ", batch " +
                           std::to_string(bi + 1));
      }
      backward(loss.total);
      step(params, velocities, lr, config.momentum);
      record.mean_loss += value;
      record.mean_triplet += loss.triplet;
      record.mean_classification += loss.classification;
      record.mean_centroid += loss.centroid;
      record.mean_triplet_centroid += loss.triplet_centroid;
      ++n_batches;
    }
    if (n_batches > 0) {
      record.mean_loss /= n_batches;
      record.mean_triplet /= n_batches;
      record.mean_classification /= n_batches;
      record.mean_centroid /= n_batches;
      record.mean_triplet_centroid /= n_batches;
    }

    bool last_epoch = epoch + 1 == config.epochs;
    if ((epoch + 1) % config.eval_period == 0 || last_epoch) {
      EvalReport eval = evaluate_now();
      record.map = eval.map;
      record.r1 = eval.r1;
      history.push_back("eval=" + std::to_string(epoch + 1) + "\t" +
                        format_double(eval.map) + "\t" +
                        format_double(eval.r1));
      if (report.best_epoch < 0 || eval.map > report.best_map) {
        report.best_map = eval.map;
        report.best_r1 = eval.r1;
        report.best_epoch = epoch + 1;
        if (!config.out_dir.empty()) {
          std::string path =
              (fs::path(config.out_dir) / "best.ckpt").string();
          net.save_checkpoint(path, sidecar(epoch + 1));
          report.best_checkpoint = path;
        }
      }
    }
    if (!config.out_dir.empty() &&
        ((epoch + 1) % config.checkpoint_period == 0 || last_epoch)) {
      std::string path = (fs::path(config.out_dir) /
                          ("epoch_" + std::to_string(epoch + 1) + ".ckpt"))
                             .string();
      net.save_checkpoint(path, sidecar(epoch + 1));
      report.final_checkpoint = path;
    }
    report.epochs.push_back(std::move(record));
  }

  if (!config.out_dir.empty()) {
    std::ofstream metrics(fs::path(config.out_dir) / "metrics.tsv");
    if (!metrics) throw DataError("unwritable path: " + config.out_dir);
    metrics << report.to_tsv();
  }
  return report;
}

}  // namespace reidforge
