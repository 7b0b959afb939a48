#include "reidforge/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "reidforge/rng.hpp"

namespace reidforge {

void ModelConfig::validate() const {
  if (input_dim < 1) throw DataError("model config: input_dim must be >= 1");
  if (embedding_dim < 1) {
    throw DataError("model config: embedding_dim must be >= 1");
  }
  for (Index h : hidden_dims) {
    if (h < 1) throw DataError("model config: hidden dims must be >= 1");
  }
  if (n_classes < 2) throw DataError("model config: n_classes must be >= 2");
}

EmbeddingNet EmbeddingNet::init(const ModelConfig& config) {
  config.validate();
  Rng rng(config.init_seed);
  EmbeddingNet net;
  net.config_ = config;

  auto affine = [&](Index in, Index out) {
    // fan-in scaled uniform weights, zero biases
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrixd w(in, out);
    for (Index i = 0; i < in; ++i) {
      for (Index j = 0; j < out; ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    net.weights_.emplace_back(w, true);
    net.biases_.emplace_back(Matrixd::Zero(1, out), true);
  };

  Index in = config.input_dim;
  for (Index h : config.hidden_dims) {
    affine(in, h);
    in = h;
  }
  affine(in, config.embedding_dim);

  net.bn_gamma_ = Tensor(Matrixd::Ones(1, config.embedding_dim), true);
  net.bn_beta_ = Tensor(Matrixd::Zero(1, config.embedding_dim), true);
  net.running_mean_ = Eigen::RowVectorXd::Zero(config.embedding_dim);
  net.running_var_ = Eigen::RowVectorXd::Ones(config.embedding_dim);

  {
    double bound = 1.0 / std::sqrt(static_cast<double>(config.embedding_dim));
    Matrixd w(config.embedding_dim, config.n_classes);
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    net.cls_weight_ = Tensor(w, true);
    net.cls_bias_ = Tensor(Matrixd::Zero(1, config.n_classes), true);
  }
  return net;
}

ForwardResult EmbeddingNet::forward(const Tensor& x, ForwardMode mode) {
  if (x.cols() != config_.input_dim) {
    throw ShapeError("forward: input is " + x.shape_str() + ", expected cols " +
                     std::to_string(config_.input_dim));
  }
  Tensor h = x;
  for (std::size_t i = 0; i + 1 < weights_.size(); ++i) {
    h = relu(add(matmul(h, weights_[i]), biases_[i]));
  }
  Tensor pre = add(matmul(h, weights_.back()), biases_.back());

  Tensor normalized;
  if (mode == ForwardMode::Train) {
    auto mu = mean_rows(pre);                       // 1 x e
    auto centered = sub(pre, mu);                   // row broadcast
    auto var = mean_rows(hadamard(centered, centered));
    auto inv_std = reciprocal(sqrt_guarded(var, kBnEps));
    normalized = hadamard(centered, inv_std);
    running_mean_ = (1.0 - kBnMomentum) * running_mean_ +
                    kBnMomentum * mu.value().row(0);
    running_var_ =
        (1.0 - kBnMomentum) * running_var_ + kBnMomentum * var.value().row(0);
  } else {
    Matrixd inv_std =
        (running_var_.array() + kBnEps).sqrt().inverse().matrix();
    normalized = hadamard(sub(pre, Tensor(running_mean_)), Tensor(inv_std));
  }
  Tensor embeddings = add(hadamard(normalized, bn_gamma_), bn_beta_);
  Tensor logits = add(matmul(embeddings, cls_weight_), cls_bias_);
  return ForwardResult{embeddings, logits};
}

std::vector<Tensor> EmbeddingNet::parameters() {
  std::vector<Tensor> params;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    params.push_back(weights_[i]);
    params.push_back(biases_[i]);
  }
  params.push_back(bn_gamma_);
  params.push_back(bn_beta_);
  params.push_back(cls_weight_);
  params.push_back(cls_bias_);
  return params;
}

namespace {

void write_block(std::ofstream& out, const Matrixd& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Matrixd read_block(std::ifstream& in, Index rows, Index cols,
                   const std::string& path) {
  Matrixd m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(double) * m.size())) {
    throw DataError(path + ": truncated checkpoint");
  }
  return m;
}

}  // namespace

void EmbeddingNet::save_checkpoint(
    const std::string& path, const std::vector<std::string>& sidecar_lines) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("unwritable path: " + path);
  out << "RFCK1 " << config_.input_dim << " " << config_.embedding_dim << " "
      << config_.n_classes << " " << config_.hidden_dims.size();
  for (Index h : config_.hidden_dims) out << " " << h;
  out << "\n";
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    write_block(out, weights_[i].value());
    write_block(out, biases_[i].value());
  }
  write_block(out, bn_gamma_.value());
  write_block(out, bn_beta_.value());
  write_block(out, Matrixd(running_mean_));
  write_block(out, Matrixd(running_var_));
  write_block(out, cls_weight_.value());
  write_block(out, cls_bias_.value());
  if (!out) throw DataError("unwritable path: " + path);

  std::ofstream meta(path + ".meta");
  if (!meta) throw DataError("unwritable path: " + path + ".meta");
  for (const auto& line : sidecar_lines) meta << line << "\n";
}

EmbeddingNet EmbeddingNet::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw DataError(path + ": missing header");
  std::istringstream hs(header);
  std::string magic;
  ModelConfig config;
  std::size_t n_hidden = 0;
  hs >> magic >> config.input_dim >> config.embedding_dim >>
      config.n_classes >> n_hidden;
  if (magic != "RFCK1" || hs.fail()) {
    throw DataError(path + ": bad checkpoint header: \"" + header + "\"");
  }
  config.hidden_dims.clear();
  for (std::size_t i = 0; i < n_hidden; ++i) {
    Index h = 0;
    hs >> h;
    if (hs.fail()) throw DataError(path + ": bad checkpoint header dims");
    config.hidden_dims.push_back(h);
  }

  EmbeddingNet net;
  net.config_ = config;
  Index in_dim = config.input_dim;
  for (std::size_t i = 0; i <= config.hidden_dims.size(); ++i) {
    Index out_dim = i < config.hidden_dims.size() ? config.hidden_dims[i]
                                                  : config.embedding_dim;
    net.weights_.emplace_back(read_block(in, in_dim, out_dim, path), true);
    net.biases_.emplace_back(read_block(in, 1, out_dim, path), true);
    in_dim = out_dim;
  }
  net.bn_gamma_ = Tensor(read_block(in, 1, config.embedding_dim, path), true);
  net.bn_beta_ = Tensor(read_block(in, 1, config.embedding_dim, path), true);
  net.running_mean_ = read_block(in, 1, config.embedding_dim, path).row(0);
  net.running_var_ = read_block(in, 1, config.embedding_dim, path).row(0);
  net.cls_weight_ =
      Tensor(read_block(in, config.embedding_dim, config.n_classes, path), true);
  net.cls_bias_ = Tensor(read_block(in, 1, config.n_classes, path), true);
  return net;
}

}  // namespace reidforge
