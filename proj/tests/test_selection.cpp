#include <gtest/gtest.h>

#include <cmath>

#include "pda/oracle.hpp"
#include "pda/selection.hpp"
#include "support.hpp"

using namespace pda;

TEST(ClassTransferable, UniformRowsGiveUniformW) {
  const ClassWeights w = class_transferable_probability(Matrix(6, 4, 0.25));
  for (double v : w.values()) EXPECT_EQ(v, 0.25);
}

TEST(ClassTransferable, OneHotRowsAverage) {
  const ClassWeights w = class_transferable_probability(Matrix{{1, 0}, {0, 1}});
  EXPECT_EQ(w, ClassWeights({0.5, 0.5}));
}

TEST(ClassTransferable, ColumnMeans) {
  const ClassWeights w = class_transferable_probability(Matrix{{0.9, 0.1}, {0.7, 0.3}});
  EXPECT_NEAR(w[0], 0.8, 1e-15);
  EXPECT_NEAR(w[1], 0.2, 1e-15);
}

TEST(ClassTransferable, EmptyTargetSetThrows) {
  EXPECT_THROW(class_transferable_probability(Matrix(0, 3)), UsageError);
}

TEST(ClassTransferable, OnSimplex) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const ClassWeights w =
        class_transferable_probability(pda::testing::random_simplex_rows(rng, 1 + rng.below(50), 1 + rng.below(8)));
    for (double v : w.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_NEAR(w.total(), 1.0, 1e-9);
  }
}

TEST(ClassTransferable, PermutationEquivariant) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(6);
    const Matrix p = pda::testing::random_simplex_rows(rng, 10, k);
    const std::vector<std::size_t> perm = rng.permutation(k);
    Matrix q(p.rows(), k);
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < k; ++j) q(i, j) = p(i, perm[j]);
    const ClassWeights wp = class_transferable_probability(p), wq = class_transferable_probability(q);
    for (std::size_t j = 0; j < k; ++j) EXPECT_EQ(wq[j], wp[perm[j]]);
  }
}

TEST(ClassTransferable, OneHotRowsMatchTrueWeightsExactly) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.below(6), n = 1 + rng.below(40);
    std::vector<std::size_t> labels(n);
    Matrix onehot(n, k);
    for (std::size_t i = 0; i < n; ++i) onehot(i, labels[i] = rng.below(k)) = 1.0;
    EXPECT_EQ(class_transferable_probability(onehot), oracle::true_class_weights(labels, k));
  }
}

TEST(TrueClassWeights, Examples) {
  EXPECT_EQ(oracle::true_class_weights({0, 0}, 3), ClassWeights({1, 0, 0}));
  EXPECT_EQ(oracle::true_class_weights({0, 1}, 3), ClassWeights({0.5, 0.5, 0}));
  const ClassWeights u = oracle::true_class_weights({0, 1, 2, 3}, 4);
  for (double v : u.values()) EXPECT_EQ(v, 0.25);
}

TEST(TrueClassWeights, OutOfRangeLabelThrows) {
  EXPECT_THROW(oracle::true_class_weights({0, 3}, 3), DomainError);
}

TEST(EntropyWeight, Examples) {
  const std::vector<double> onehot{0, 1, 0}, two{0.5, 0.5}, four{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(entropy_weight(onehot), 2.0);
  EXPECT_NEAR(entropy_weight(two), 1.5, 1e-15);
  EXPECT_NEAR(entropy_weight(four), 1.25, 1e-15);
}

TEST(EntropyWeight, BoundedByOneHotAndUniform) {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.below(7);
    const Matrix p = pda::testing::random_simplex_rows(rng, 1, k);
    const double we = entropy_weight(p.row(0));
    EXPECT_LT(we, 2.0);
    EXPECT_GT(we, 1.0 + 1.0 / static_cast<double>(k) - 1e-12);
  }
}

TEST(InstanceWeights, AreThePredictionRow) {
  const std::vector<double> p{0.7, 0.2, 0.1};
  EXPECT_EQ(instance_weights(p), p);
  const std::vector<double> onehot{0, 0, 1};
  const auto w = instance_weights(onehot);
  EXPECT_EQ(std::count_if(w.begin(), w.end(), [](double v) { return v > 0; }), 1);
}

TEST(Oracle, ValidatesSharedSetAndLabels) {
  EXPECT_THROW((oracle::OracleContext{{}, {}}).validate(3), UsageError);
  EXPECT_THROW((oracle::OracleContext{{1, 0}, {}}).validate(3), UsageError);
  EXPECT_THROW((oracle::OracleContext{{0, 3}, {}}).validate(3), DomainError);
  EXPECT_THROW((oracle::OracleContext{{0, 1}, {2}}).validate(3), DomainError);
  EXPECT_NO_THROW((oracle::OracleContext{{0, 1}, {1, 0}}).validate(3));
}
