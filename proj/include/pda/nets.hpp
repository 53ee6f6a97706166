#pragma once

// Feature extractor F, classifier G and the multi-task domain discriminator D.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pda/errors.hpp"
#include "pda/rng.hpp"
#include "pda/tensor.hpp"

namespace pda {

enum class Activation { relu, none };

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Activation activation = Activation::none;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

// Uniform on [-a, a] with a = sqrt(6 / fan_in), i.e. variance 2 / fan_in.
// Biases start at zero.
inline DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  if (in == 0 || out == 0) throw UsageError("dense layer dimensions must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  Matrix w(in, out);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return DenseLayer{Tensor(std::move(w), true), Tensor(Matrix(1, out), true), act};
}

// Stack of dense layers. An MLP with no layers is the identity on in_dim
// columns.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::size_t in_dim) : in_dim_(in_dim) {}
  Mlp(std::size_t in_dim, std::vector<DenseLayer> layers) : in_dim_(in_dim), layers_(std::move(layers)) {
    std::size_t d = in_dim_;
    for (const DenseLayer& l : layers_) {
      if (l.in_dim() != d) throw DimensionError("mlp: layer dimensions do not chain");
      if (l.bias.rows() != 1 || l.bias.cols() != l.out_dim()) throw DimensionError("mlp: bias shape");
      d = l.out_dim();
    }
  }

  // Hidden layers use `hidden`, the last layer uses `last`.
  static Mlp create(std::size_t in_dim, const std::vector<std::size_t>& widths, Activation hidden,
                    Activation last, Rng& rng) {
    std::vector<DenseLayer> layers;
    std::size_t d = in_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      layers.push_back(make_dense(d, widths[i], i + 1 == widths.size() ? last : hidden, rng));
      d = widths[i];
    }
    return Mlp(in_dim, std::move(layers));
  }

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return layers_.empty() ? in_dim_ : layers_.back().out_dim(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Var forward(Tape& tape, Var x) {
    if (x.cols() != in_dim_) {
      throw DimensionError("mlp: input width " + std::to_string(x.cols()) + ", expected " +
                           std::to_string(in_dim_));
    }
    Var h = x;
    for (DenseLayer& l : layers_) {
      h = add_bias(matmul(h, tape.watch(l.weight)), tape.watch(l.bias));
      if (l.activation == Activation::relu) h = relu(h);
    }
    return h;
  }

  void collect_parameters(std::vector<Tensor*>& out) {
    for (DenseLayer& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }

 private:
  std::size_t in_dim_ = 0;
  std::vector<DenseLayer> layers_;
};

// Shared trunk followed by one single-logit head per alignment task. With
// shared_trunk off every head owns a private copy of the trunk.
class MultiTaskDiscriminator {
 public:
  MultiTaskDiscriminator() = default;

  MultiTaskDiscriminator(Mlp trunk, std::vector<Mlp> heads)
      : shared_trunk_(true), trunk_(std::move(trunk)), heads_(std::move(heads)) {
    validate();
  }

  MultiTaskDiscriminator(std::vector<Mlp> private_trunks, std::vector<Mlp> heads)
      : shared_trunk_(false), private_trunks_(std::move(private_trunks)), heads_(std::move(heads)) {
    if (private_trunks_.size() != heads_.size()) throw DimensionError("discriminator: one trunk per head");
    validate();
  }

  static MultiTaskDiscriminator create(std::size_t in_dim, const std::vector<std::size_t>& trunk_widths,
                                       std::size_t num_heads, bool shared_trunk, Rng& rng) {
    if (num_heads == 0) throw UsageError("discriminator: at least one head required");
    const std::size_t head_in = trunk_widths.empty() ? in_dim : trunk_widths.back();
    if (shared_trunk) {
      Mlp trunk = Mlp::create(in_dim, trunk_widths, Activation::relu, Activation::relu, rng);
      std::vector<Mlp> heads;
      for (std::size_t k = 0; k < num_heads; ++k)
        heads.push_back(Mlp::create(head_in, {1}, Activation::none, Activation::none, rng));
      return MultiTaskDiscriminator(std::move(trunk), std::move(heads));
    }
    std::vector<Mlp> trunks;
    std::vector<Mlp> heads;
    for (std::size_t k = 0; k < num_heads; ++k) {
      trunks.push_back(Mlp::create(in_dim, trunk_widths, Activation::relu, Activation::relu, rng));
      heads.push_back(Mlp::create(head_in, {1}, Activation::none, Activation::none, rng));
    }
    return MultiTaskDiscriminator(std::move(trunks), std::move(heads));
  }

  bool shared_trunk() const { return shared_trunk_; }
  std::size_t num_heads() const { return heads_.size(); }
  std::size_t in_dim() const { return shared_trunk_ ? trunk_.in_dim() : private_trunks_.front().in_dim(); }
  const Mlp& trunk() const { return trunk_; }
  const std::vector<Mlp>& private_trunks() const { return private_trunks_; }
  const std::vector<Mlp>& heads() const { return heads_; }
  std::vector<Mlp>& heads() { return heads_; }

  // Per-head logits, m x num_heads. `features` should already have passed
  // through grad_reverse when used adversarially.
  Var logits(Tape& tape, Var features) {
    if (features.cols() != in_dim()) throw DimensionError("discriminator: feature width mismatch");
    std::vector<Var> cols;
    cols.reserve(heads_.size());
    if (shared_trunk_) {
      Var t = trunk_.forward(tape, features);
      for (Mlp& h : heads_) cols.push_back(h.forward(tape, t));
    } else {
      for (std::size_t k = 0; k < heads_.size(); ++k)
        cols.push_back(heads_[k].forward(tape, private_trunks_[k].forward(tape, features)));
    }
    return concat_cols(cols);
  }

  void collect_parameters(std::vector<Tensor*>& out) {
    if (shared_trunk_) trunk_.collect_parameters(out);
    for (std::size_t k = 0; k < heads_.size(); ++k) {
      if (!shared_trunk_) private_trunks_[k].collect_parameters(out);
      heads_[k].collect_parameters(out);
    }
  }

 private:
  void validate() const {
    if (heads_.empty()) throw UsageError("discriminator: at least one head required");
    for (std::size_t k = 0; k < heads_.size(); ++k) {
      const std::size_t trunk_out = shared_trunk_ ? trunk_.out_dim() : private_trunks_[k].out_dim();
      if (heads_[k].in_dim() != trunk_out || heads_[k].out_dim() != 1)
        throw DimensionError("discriminator: head " + std::to_string(k) + " does not fit its trunk");
      if (!shared_trunk_ && private_trunks_[k].in_dim() != private_trunks_.front().in_dim())
        throw DimensionError("discriminator: private trunks disagree on input width");
    }
  }

  bool shared_trunk_ = true;
  Mlp trunk_;
  std::vector<Mlp> private_trunks_;
  std::vector<Mlp> heads_;
};

struct ArchitectureSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> feature_widths{16, 16};
  std::vector<std::size_t> classifier_hidden{};
  std::vector<std::size_t> discriminator_trunk{};
  std::size_t num_classes = 5;
  // |C_s| for multi-task alignment, 1 for a single domain adversary.
  std::size_t discriminator_heads = 5;
  bool shared_trunk = true;

  void validate() const {
    if (input_dim == 0) throw ConfigError("architecture: input_dim must be positive");
    if (num_classes < 1) throw ConfigError("architecture: num_classes must be positive");
    if (discriminator_heads != 1 && discriminator_heads != num_classes)
      throw ConfigError("architecture: discriminator_heads must be 1 or num_classes");
    for (auto v : {&feature_widths, &classifier_hidden, &discriminator_trunk})
      for (std::size_t w : *v)
        if (w == 0) throw ConfigError("architecture: layer widths must be positive");
  }

  std::size_t feature_dim() const { return feature_widths.empty() ? input_dim : feature_widths.back(); }
};

struct ModelBundle {
  Mlp feature;     // F
  Mlp classifier;  // G, logits; softmax applied in classify()
  MultiTaskDiscriminator discriminator;  // D

  std::size_t num_classes() const { return classifier.out_dim(); }

  // Every trainable tensor exactly once: F, then G, then D.
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    feature.collect_parameters(out);
    classifier.collect_parameters(out);
    discriminator.collect_parameters(out);
    return out;
  }

  void zero_grad() {
    for (Tensor* t : parameters()) t->zero_grad();
  }

  void validate() const {
    if (feature.out_dim() != classifier.in_dim())
      throw DimensionError("bundle: F output width differs from G input width");
    if (feature.out_dim() != discriminator.in_dim())
      throw DimensionError("bundle: F output width differs from D input width");
  }
};

// F, G and D are drawn from separate substreams of `rng`, so changing D's
// shape leaves F and G bit-identical.
inline ModelBundle init_bundle(const ArchitectureSpec& spec, const Rng& rng) {
  spec.validate();
  Rng f_rng = rng.substream("F");
  Rng g_rng = rng.substream("G");
  Rng d_rng = rng.substream("D");
  ModelBundle b;
  b.feature = Mlp::create(spec.input_dim, spec.feature_widths, Activation::relu, Activation::relu, f_rng);
  std::vector<std::size_t> g_widths = spec.classifier_hidden;
  g_widths.push_back(spec.num_classes);
  b.classifier = Mlp::create(spec.feature_dim(), g_widths, Activation::relu, Activation::none, g_rng);
  b.discriminator = MultiTaskDiscriminator::create(spec.feature_dim(), spec.discriminator_trunk,
                                                   spec.discriminator_heads, spec.shared_trunk, d_rng);
  b.validate();
  return b;
}

// f = F(x)
inline Var f_forward(Mlp& feature, Tape& tape, Var x) { return feature.forward(tape, x); }

// y_hat = softmax(G(f))
inline Var g_forward(Mlp& classifier, Tape& tape, Var features) {
  return softmax_rows(classifier.forward(tape, features));
}

// Entry (i, k): head k's probability that sample i is from the source
// domain. Features pass through grad_reverse(., lambda) first.
inline Var d_forward(MultiTaskDiscriminator& disc, Tape& tape, Var features, double lambda) {
  return sigmoid(disc.logits(tape, grad_reverse(features, lambda)));
}

// Class probabilities for a batch, evaluated on a throwaway tape.
inline Matrix predict(ModelBundle& bundle, const Matrix& x) {
  Tape tape;
  return g_forward(bundle.classifier, tape, f_forward(bundle.feature, tape, tape.input(x))).value();
}

inline Matrix extract_features(ModelBundle& bundle, const Matrix& x) {
  Tape tape;
  return f_forward(bundle.feature, tape, tape.input(x)).value();
}

}  // namespace pda
