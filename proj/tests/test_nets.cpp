#include <gtest/gtest.h>

#include <set>

#include "pda/nets.hpp"
#include "support.hpp"

using namespace pda;
using pda::testing::random_matrix;

namespace {

Mlp zero_mlp(std::size_t in, std::vector<std::size_t> widths) {
  Rng rng(0);
  Mlp m = Mlp::create(in, widths, Activation::relu, Activation::relu, rng);
  for (DenseLayer& l : m.layers()) l.weight.value() = Matrix(l.in_dim(), l.out_dim());
  return m;
}

}  // namespace

TEST(Feature, ZeroWeightsGiveZeroFeatures) {
  Rng rng(1);
  Mlp f = zero_mlp(3, {4, 2});
  Tape t;
  EXPECT_EQ(f_forward(f, t, t.input(random_matrix(rng, 5, 3))).value(), Matrix(5, 2));
}

TEST(Feature, IdentityLayerPassesInputThrough) {
  Rng rng(2);
  Mlp f(3, {DenseLayer{Tensor(Matrix::identity(3), true), Tensor(Matrix(1, 3), true), Activation::none}});
  const Matrix x = random_matrix(rng, 4, 3);
  Tape t;
  EXPECT_EQ(f_forward(f, t, t.input(x)).value(), x);
}

TEST(Feature, ToyShape) {
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(3));
  Tape t;
  const Var f = f_forward(b.feature, t, t.input(Matrix(7, 2)));
  EXPECT_EQ(f.rows(), 7u);
  EXPECT_EQ(f.cols(), 16u);
  ASSERT_EQ(b.feature.layers().size(), 2u);
  EXPECT_EQ(b.feature.layers()[0].activation, Activation::relu);
  EXPECT_EQ(b.feature.layers()[1].activation, Activation::relu);
}

TEST(Feature, MatchesPlainLoopReference) {
  Rng rng(4);
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(4));
  const Matrix x = random_matrix(rng, 9, 2, -3, 3);
  Tape t;
  EXPECT_LE(pda::testing::max_abs_diff(f_forward(b.feature, t, t.input(x)).value(),
                                       pda::testing::mlp_reference(b.feature, x)),
            1e-14);
}

TEST(Feature, WidthMismatchThrows) {
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(5));
  Tape t;
  EXPECT_THROW(f_forward(b.feature, t, t.input(Matrix(2, 3))), DimensionError);
}

TEST(Classifier, RowsOnSimplex) {
  Rng rng(6);
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(6));
  Tape t;
  const Matrix y = g_forward(b.classifier, t, t.input(random_matrix(rng, 20, 16, -5, 5))).value();
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double s = 0.0;
    for (double v : y.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Classifier, ZeroLogitsGiveUniformRow) {
  Mlp g(4, {DenseLayer{Tensor(Matrix(4, 5), true), Tensor(Matrix(1, 5), true), Activation::none}});
  Tape t;
  const Matrix y = g_forward(g, t, t.input(Matrix{{1, 2, 3, 4}})).value();
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(Classifier, ToyIsSingleLinearLayer) {
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(7));
  ASSERT_EQ(b.classifier.layers().size(), 1u);
  EXPECT_EQ(b.classifier.layers()[0].in_dim(), 16u);
  EXPECT_EQ(b.classifier.layers()[0].out_dim(), 5u);
  EXPECT_EQ(b.classifier.layers()[0].activation, Activation::none);
}

TEST(Discriminator, ZeroHeadsGiveOneHalf) {
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(8));
  for (Mlp& h : b.discriminator.heads())
    for (DenseLayer& l : h.layers()) l.weight.value() = Matrix(l.in_dim(), l.out_dim());
  Rng rng(8);
  Tape t;
  const Matrix p = d_forward(b.discriminator, t, t.input(random_matrix(rng, 6, 16)), 1.0).value();
  EXPECT_EQ(p.rows(), 6u);
  EXPECT_EQ(p.cols(), 5u);
  for (double v : p.values()) EXPECT_EQ(v, 0.5);
}

TEST(Discriminator, ProbabilitiesInOpenInterval) {
  Rng rng(9);
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(9));
  Tape t;
  const Matrix p = d_forward(b.discriminator, t, t.input(random_matrix(rng, 30, 16, -3, 3)), 1.0).value();
  for (double v : p.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Discriminator, LambdaZeroStopsAtFeatures) {
  Rng rng(10);
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(10));
  Tensor x(random_matrix(rng, 4, 2), true);
  Tape t;
  t.backward(mean(d_forward(b.discriminator, t, f_forward(b.feature, t, t.watch(x)), 0.0)));
  for (Tensor* p : std::vector<Tensor*>{&b.feature.layers()[0].weight, &b.feature.layers()[1].bias})
    for (double g : p->grad()->values()) EXPECT_EQ(g, 0.0);
  for (double g : x.grad()->values()) EXPECT_EQ(g, 0.0);
  bool any = false;
  for (const Mlp& h : b.discriminator.heads())
    for (double g : h.layers()[0].weight.grad()->values()) any = any || g != 0.0;
  EXPECT_TRUE(any);
}

TEST(Discriminator, ToyHasOneLayerHeadPerClass) {
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(11));
  EXPECT_EQ(b.discriminator.num_heads(), 5u);
  EXPECT_TRUE(b.discriminator.trunk().layers().empty());
  for (const Mlp& h : b.discriminator.heads()) {
    ASSERT_EQ(h.layers().size(), 1u);
    EXPECT_EQ(h.in_dim(), 16u);
    EXPECT_EQ(h.out_dim(), 1u);
  }
}

TEST(Discriminator, HeadMustFitTrunk) {
  Rng rng(12);
  Mlp trunk = Mlp::create(4, {3}, Activation::relu, Activation::relu, rng);
  std::vector<Mlp> heads{Mlp::create(4, {1}, Activation::none, Activation::none, rng)};
  EXPECT_THROW(MultiTaskDiscriminator(std::move(trunk), std::move(heads)), DimensionError);
}

TEST(Discriminator, SharedAndPrivateTrunksAgreeWhenCopied) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 1 + rng.below(5), heads = 1 + rng.below(5);
    const std::vector<std::size_t> widths = pda::testing::random_widths(rng, 3);
    MultiTaskDiscriminator shared = MultiTaskDiscriminator::create(in, widths, heads, true, rng);
    std::vector<Mlp> trunks(heads, shared.trunk());
    MultiTaskDiscriminator priv(std::move(trunks), shared.heads());
    const Matrix x = random_matrix(rng, 7, in, -2, 2);
    Tape t;
    const Matrix a = d_forward(shared, t, t.input(x), 1.0).value();
    const Matrix b = d_forward(priv, t, t.input(x), 1.0).value();
    EXPECT_EQ(a, b);
  }
}

TEST(Bundle, ParameterEnumerationMatchesArchitecture) {
  ArchitectureSpec spec;
  spec.discriminator_trunk = {8, 4};
  for (bool shared : {true, false}) {
    spec.shared_trunk = shared;
    ModelBundle b = init_bundle(spec, Rng(14));
    const auto params = b.parameters();
    const std::set<Tensor*> unique(params.begin(), params.end());
    EXPECT_EQ(unique.size(), params.size());
    const std::size_t f = 2 * 2, g = 2 * 1;
    const std::size_t trunk = 2 * spec.discriminator_trunk.size();
    const std::size_t d = shared ? trunk + 2 * 5 : 5 * (trunk + 2);
    EXPECT_EQ(params.size(), f + g + d);
    std::size_t scalars = 0;
    for (Tensor* p : params) {
      EXPECT_TRUE(p->requires_grad());
      scalars += p->value().size();
    }
    const std::size_t f_scalars = (2 * 16 + 16) + (16 * 16 + 16), g_scalars = 16 * 5 + 5;
    const std::size_t trunk_scalars = (16 * 8 + 8) + (8 * 4 + 4), head_scalars = 4 + 1;
    const std::size_t d_scalars = shared ? trunk_scalars + 5 * head_scalars : 5 * (trunk_scalars + head_scalars);
    EXPECT_EQ(scalars, f_scalars + g_scalars + d_scalars);
  }
}

TEST(Bundle, SingleHeadSpec) {
  ArchitectureSpec spec;
  spec.discriminator_heads = 1;
  EXPECT_EQ(init_bundle(spec, Rng(15)).discriminator.num_heads(), 1u);
  spec.discriminator_heads = 3;
  EXPECT_THROW(init_bundle(spec, Rng(15)), ConfigError);
}

TEST(Init, SameSeedIsBitIdentical) {
  ModelBundle a = init_bundle(ArchitectureSpec{}, Rng(16));
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(16));
  ModelBundle c = init_bundle(ArchitectureSpec{}, Rng(17));
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value(), pb[i]->value());
    differs = differs || pa[i]->value() != pc[i]->value();
  }
  EXPECT_TRUE(differs);
}

TEST(Init, BiasesAreZero) {
  ModelBundle b = init_bundle(ArchitectureSpec{}, Rng(18));
  for (Tensor* p : b.parameters()) {
    if (p->rows() == 1) {
      for (double v : p->value().values()) EXPECT_EQ(v, 0.0);
    }
  }
}

TEST(Init, WeightVarianceIsTwoOverFanIn) {
  Rng rng(19);
  for (std::size_t fan_in : {10u, 100u, 400u}) {
    const std::size_t out = 10000 / fan_in;
    const DenseLayer l = make_dense(fan_in, out, Activation::relu, rng);
    double mean = 0.0, sq = 0.0;
    for (double v : l.weight.value().values()) mean += v;
    mean /= static_cast<double>(l.weight.value().size());
    for (double v : l.weight.value().values()) sq += (v - mean) * (v - mean);
    const double var = sq / static_cast<double>(l.weight.value().size());
    const double expected = 2.0 / static_cast<double>(fan_in);
    EXPECT_NEAR(var, expected, 0.2 * expected) << "fan_in " << fan_in;
  }
}

TEST(Init, DiscriminatorShapeDoesNotPerturbFeatureOrClassifier) {
  ArchitectureSpec a, b;
  b.discriminator_heads = 1;
  b.shared_trunk = false;
  ModelBundle ma = init_bundle(a, Rng(20)), mb = init_bundle(b, Rng(20));
  for (std::size_t i = 0; i < ma.feature.layers().size(); ++i)
    EXPECT_EQ(ma.feature.layers()[i].weight.value(), mb.feature.layers()[i].weight.value());
  EXPECT_EQ(ma.classifier.layers()[0].weight.value(), mb.classifier.layers()[0].weight.value());
}

TEST(FiniteDifferences, EveryNetworkKind) {
  using pda::testing::NetKind;
  Rng rng(21);
  for (NetKind kind : {NetKind::feature, NetKind::classifier, NetKind::discriminator_shared,
                       NetKind::discriminator_private}) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) worst = std::max(worst, net_gradcheck(rng, kind).max_rel_error);
    EXPECT_LT(worst, 1e-4) << static_cast<int>(kind);
  }
}
