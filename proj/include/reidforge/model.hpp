#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reidforge/tensor.hpp"

namespace reidforge {

struct ModelConfig {
  Index input_dim = 0;
  std::vector<Index> hidden_dims = {64};
  Index embedding_dim = 512;
  Index n_classes = 0;
  std::uint64_t init_seed = 1;

  void validate() const;
};

enum class ForwardMode { Train, Eval };

struct ForwardResult {
  Tensor embeddings;  // n x embedding_dim, the pre-classifier activation
  Tensor logits;      // n x n_classes
};

// Feed-forward embedding network: affine+relu hidden layers, an affine map
// to the embedding width, per-feature batch normalization as the
// penultimate layer, then a linear classification head over the training
// identities. Retrieval uses the normalized embeddings; the classifier
// only feeds the training loss.
class EmbeddingNet {
 public:
  static EmbeddingNet init(const ModelConfig& config);

  ForwardResult forward(const Tensor& x, ForwardMode mode);

  const ModelConfig& config() const { return config_; }
  // All trainable tensors; copies share storage with the network.
  std::vector<Tensor> parameters();

  const Eigen::RowVectorXd& running_mean() const { return running_mean_; }
  const Eigen::RowVectorXd& running_var() const { return running_var_; }

  // Direct access for tests and checkpoint IO. Layer i is the i-th affine
  // map; the last one maps into the embedding space.
  Tensor& layer_weight(std::size_t i) { return weights_[i]; }
  Tensor& layer_bias(std::size_t i) { return biases_[i]; }
  std::size_t n_layers() const { return weights_.size(); }
  Tensor& bn_gamma() { return bn_gamma_; }
  Tensor& bn_beta() { return bn_beta_; }
  Tensor& classifier_weight() { return cls_weight_; }
  Tensor& classifier_bias() { return cls_bias_; }

  void save_checkpoint(const std::string& path,
                       const std::vector<std::string>& sidecar_lines = {}) const;
  static EmbeddingNet load_checkpoint(const std::string& path);

  static constexpr double kBnMomentum = 0.1;
  static constexpr double kBnEps = 1e-5;

 private:
  EmbeddingNet() = default;

  ModelConfig config_;
  std::vector<Tensor> weights_;  // hidden layers then embedding layer
  std::vector<Tensor> biases_;
  Tensor bn_gamma_;
  Tensor bn_beta_;
  Tensor cls_weight_;
  Tensor cls_bias_;
  Eigen::RowVectorXd running_mean_;
  Eigen::RowVectorXd running_var_;
};

}  // namespace reidforge
