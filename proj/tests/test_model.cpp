#include "doctest.h"

#include "reidforge/grad_check.hpp"
#include "reidforge/model.hpp"
#include "reidforge/rng.hpp"
#include "test_support.hpp"

using namespace reidforge;
using reidforge::testing::TempDir;

namespace {

ModelConfig small_config() {
  ModelConfig config;
  config.input_dim = 6;
  config.hidden_dims = {5};
  config.embedding_dim = 4;
  config.n_classes = 3;
  config.init_seed = 9;
  return config;
}

Matrixd random_input(Rng& rng, Index n, Index d) {
  Matrixd x(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) x(i, j) = rng.uniform(-1.5, 1.5);
  }
  return x;
}

}  // namespace

TEST_CASE("init is deterministic in the seed") {
  EmbeddingNet a = EmbeddingNet::init(small_config());
  EmbeddingNet b = EmbeddingNet::init(small_config());
  for (std::size_t i = 0; i < a.n_layers(); ++i) {
    CHECK(a.layer_weight(i).value() == b.layer_weight(i).value());
    CHECK(a.layer_bias(i).value().isZero(0.0));
  }
  ModelConfig other = small_config();
  other.init_seed = 10;
  EmbeddingNet c = EmbeddingNet::init(other);
  CHECK(a.layer_weight(0).value() != c.layer_weight(0).value());
}

TEST_CASE("weights respect the fan-in bound") {
  EmbeddingNet net = EmbeddingNet::init(small_config());
  double bound0 = 1.0 / std::sqrt(6.0);
  CHECK(net.layer_weight(0).value().cwiseAbs().maxCoeff() <= bound0);
}

TEST_CASE("empty hidden list yields a single affine layer") {
  ModelConfig config = small_config();
  config.hidden_dims = {};
  EmbeddingNet net = EmbeddingNet::init(config);
  CHECK(net.n_layers() == 1);
  CHECK(net.layer_weight(0).rows() == config.input_dim);
  CHECK(net.layer_weight(0).cols() == config.embedding_dim);
}

TEST_CASE("identity-initialized affine map passes inputs through in eval") {
  ModelConfig config;
  config.input_dim = 4;
  config.hidden_dims = {};
  config.embedding_dim = 4;
  config.n_classes = 2;
  EmbeddingNet net = EmbeddingNet::init(config);
  net.layer_weight(0).mutable_value() = Matrixd::Identity(4, 4);

  Rng rng(3);
  Matrixd x = random_input(rng, 5, 4);
  ForwardResult out = net.forward(Tensor(x), ForwardMode::Eval);
  // fresh running stats: embeddings = x / sqrt(1 + eps)
  CHECK((out.embeddings.value() - x).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("eval forward is deterministic and side-effect free") {
  EmbeddingNet net = EmbeddingNet::init(small_config());
  Rng rng(4);
  Matrixd x = random_input(rng, 7, 6);
  ForwardResult a = net.forward(Tensor(x), ForwardMode::Eval);
  ForwardResult b = net.forward(Tensor(x), ForwardMode::Eval);
  CHECK(a.embeddings.value() == b.embeddings.value());
  CHECK(a.logits.value() == b.logits.value());
}

TEST_CASE("train mode batch statistics match the empirical moments") {
  EmbeddingNet net = EmbeddingNet::init(small_config());
  Rng rng(5);
  Matrixd x = random_input(rng, 32, 6);

  Eigen::RowVectorXd mean_before = net.running_mean();
  ForwardResult out = net.forward(Tensor(x), ForwardMode::Train);

  // recover the pre-normalization activations by replaying the affine maps
  Matrixd h = (x * net.layer_weight(0).value()).rowwise() +
              net.layer_bias(0).value().row(0);
  h = h.cwiseMax(0.0);
  Matrixd pre = (h * net.layer_weight(1).value()).rowwise() +
                net.layer_bias(1).value().row(0);
  Eigen::RowVectorXd mu = pre.colwise().mean();
  Eigen::RowVectorXd var =
      (pre.rowwise() - mu).array().square().colwise().mean();

  // running stats: (1 - momentum) * old + momentum * batch
  Eigen::RowVectorXd expect_mean =
      0.9 * mean_before + 0.1 * mu;
  CHECK((net.running_mean() - expect_mean).cwiseAbs().maxCoeff() < 1e-10);

  // normalized embeddings have ~zero mean and ~unit variance per feature
  Eigen::RowVectorXd emb_mean = out.embeddings.value().colwise().mean();
  CHECK(emb_mean.cwiseAbs().maxCoeff() < 1e-10);
  Eigen::RowVectorXd emb_var = (out.embeddings.value().rowwise() - emb_mean)
                                   .array()
                                   .square()
                                   .colwise()
                                   .mean();
  for (Index j = 0; j < emb_var.size(); ++j) {
    CHECK(emb_var(j) == doctest::Approx(var(j) / (var(j) + 1e-5)).epsilon(1e-8));
  }
}

TEST_CASE("gradient reaches every parameter block") {
  EmbeddingNet net = EmbeddingNet::init(small_config());
  Rng rng(6);
  Matrixd x = random_input(rng, 10, 6);
  ForwardResult out = net.forward(Tensor(x), ForwardMode::Train);
  backward(sum(add(sum(out.logits), sum(out.embeddings))));
  for (auto& p : net.parameters()) {
    CHECK_FALSE(p.grad().isZero(0.0));
  }
}

TEST_CASE("grad check of summed logits wrt the first-layer weights") {
  EmbeddingNet net = EmbeddingNet::init(small_config());
  Rng rng(7);
  Matrixd x = random_input(rng, 6, 6);
  Tensor input(x);
  // eval mode: in train mode batch normalization zero-centers the
  // embeddings, which makes the logit sum constant in the early weights
  double err = grad_check<double>(
      [&](const Tensor& w) {
        EmbeddingNet probe = EmbeddingNet::init(small_config());
        probe.layer_weight(0) = w;  // share the differentiated node
        ForwardResult out = probe.forward(input, ForwardMode::Eval);
        return sum(out.logits);
      },
      net.layer_weight(0), 1e-5);
  CHECK(err < 1e-5);

  // train mode, checked through a functional the normalization cannot kill
  err = grad_check<double>(
      [&](const Tensor& w) {
        EmbeddingNet probe = EmbeddingNet::init(small_config());
        probe.layer_weight(0) = w;
        ForwardResult out = probe.forward(input, ForwardMode::Train);
        return sum(squared_norm_rows(out.logits));
      },
      net.layer_weight(0), 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("forward rejects mismatched input width") {
  EmbeddingNet net = EmbeddingNet::init(small_config());
  CHECK_THROWS_AS(net.forward(Tensor::zeros(3, 5), ForwardMode::Eval),
                  ShapeError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  TempDir tmp("ckpt");
  EmbeddingNet net = EmbeddingNet::init(small_config());
  Rng rng(8);
  Matrixd x = random_input(rng, 12, 6);
  net.forward(Tensor(x), ForwardMode::Train);  // move the running stats

  std::string path = tmp.sub("model.ckpt");
  net.save_checkpoint(path, {"epoch=3"});
  EmbeddingNet back = EmbeddingNet::load_checkpoint(path);

  REQUIRE(back.n_layers() == net.n_layers());
  for (std::size_t i = 0; i < net.n_layers(); ++i) {
    CHECK(back.layer_weight(i).value() == net.layer_weight(i).value());
    CHECK(back.layer_bias(i).value() == net.layer_bias(i).value());
  }
  CHECK(back.running_mean() == net.running_mean());
  CHECK(back.running_var() == net.running_var());

  Matrixd probe = random_input(rng, 5, 6);
  ForwardResult a = net.forward(Tensor(probe), ForwardMode::Eval);
  ForwardResult b = back.forward(Tensor(probe), ForwardMode::Eval);
  CHECK(a.embeddings.value() == b.embeddings.value());
  CHECK(a.logits.value() == b.logits.value());
}

TEST_CASE("model config validation") {
  ModelConfig config = small_config();
  config.n_classes = 1;
  CHECK_THROWS_AS(EmbeddingNet::init(config), DataError);
  config = small_config();
  config.input_dim = 0;
  CHECK_THROWS_AS(EmbeddingNet::init(config), DataError);
}
