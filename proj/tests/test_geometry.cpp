#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "sinkdrift/coupling.hpp"
#include "sinkdrift/geometry.hpp"
#include "sinkdrift/rng.hpp"

using namespace sinkdrift;
using Eigen::MatrixXd;

TEST_SUITE("geometry") {

TEST_CASE("pairwise cost examples") {
  MatrixXd o(1, 2), a(1, 2), b(1, 2);
  o << 0, 0;
  a << 3, 4;
  b << 1, 1;
  CHECK(pairwise_cost(o, o, CostKind::SqEuclideanHalf).values(0, 0) == 0.0);
  CHECK(pairwise_cost(o, a, CostKind::Euclidean).values(0, 0) == 5.0);
  CHECK(pairwise_cost(o, b, CostKind::SqEuclideanHalf).values(0, 0) == 1.0);
  CHECK(pairwise_cost(o, a, CostKind::SqEuclidean).values(0, 0) == 25.0);
}

TEST_CASE("pairwise cost rejects dimension mismatch") {
  CHECK_THROWS_AS(pairwise_cost(MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 3), CostKind::SqEuclidean),
                  InvalidArgument);
}

TEST_CASE("pairwise cost is symmetric with a zero diagonal on one cloud") {
  Rng rng(7);
  const MatrixXd x = rng.normal_matrix(12, 3);
  for (CostKind kind : {CostKind::SqEuclideanHalf, CostKind::SqEuclidean, CostKind::Euclidean}) {
    const MatrixXd c = pairwise_cost(x, x, kind).values;
    CHECK(c == c.transpose());
    CHECK(c.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.array() >= 0).all());
  }
}

TEST_CASE("half squared cost matches the inner-product expansion") {
  Rng rng(11);
  const MatrixXd x = rng.normal_matrix(20, 4);
  const MatrixXd y = 2.0 * rng.normal_matrix(15, 4);
  const MatrixXd c = pairwise_cost(x, y, CostKind::SqEuclideanHalf).values;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      const double expansion =
          0.5 * (x.row(i).squaredNorm() + y.row(j).squaredNorm() - 2.0 * x.row(i).dot(y.row(j)));
      const double direct = 0.5 * oracle::sq_dist(x, i, y, j);
      CHECK(c(i, j) == doctest::Approx(direct).epsilon(1e-12));
      CHECK(std::abs(c(i, j) - expansion) <= 1e-12 * std::max(1.0, direct) * 10);
    }
  }
}

TEST_CASE("mask self distances") {
  CostMatrix<double> c{MatrixXd(2, 2), CostKind::SqEuclidean};
  c.values << 0, 2, 2, 0;
  const MatrixXd masked = mask_self_distances(c, 1e6).values;
  CHECK(masked(0, 0) == 1e6);
  CHECK(masked(1, 1) == 1e6);
  CHECK(masked(0, 1) == 2.0);
  CHECK(masked(1, 0) == 2.0);

  CostMatrix<double> one{MatrixXd::Zero(1, 1), CostKind::SqEuclidean};
  CHECK(mask_self_distances(one, 0.0).values(0, 0) == 0.0);

  CostMatrix<double> small{MatrixXd(2, 2), CostKind::SqEuclidean};
  small.values << 0, 1, 1, 0;
  const MatrixXd m5 = mask_self_distances(small, 5.0).values;
  CHECK(m5(0, 0) == 5.0);
  CHECK(m5(0, 1) == 1.0);

  CostMatrix<double> rect{MatrixXd::Zero(2, 3), CostKind::SqEuclidean};
  CHECK_THROWS_AS(mask_self_distances(rect, 1.0), InvalidArgument);
}

TEST_CASE("gibbs kernel examples") {
  CostMatrix<double> z{MatrixXd::Zero(1, 1), CostKind::SqEuclidean};
  CHECK(gibbs_kernel(z, 1.0).linear()(0, 0) == 1.0);

  CostMatrix<double> c{MatrixXd(2, 2), CostKind::SqEuclidean};
  c.values << 0, 2, 2, 0;
  const MatrixXd k = gibbs_kernel(c, 2.0).linear();
  CHECK(k(0, 0) == 1.0);
  CHECK(k(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

  CostMatrix<double> big{MatrixXd::Constant(1, 1, 1e6), CostKind::SqEuclidean};
  const auto g = gibbs_kernel(big, 0.01);
  CHECK(g.log_values(0, 0) == -1e8);
  CHECK(g.linear()(0, 0) == 0.0);

  CHECK_THROWS_AS(gibbs_kernel(c, 0.0), InvalidArgument);
  CHECK_THROWS_AS(gibbs_kernel(c, -1.0), InvalidArgument);
}

TEST_CASE("gibbs kernel monotonicity") {
  CostMatrix<double> c{MatrixXd(1, 3), CostKind::SqEuclidean};
  c.values << 0.5, 1.0, 2.0;
  const MatrixXd k1 = gibbs_kernel(c, 1.0).linear();
  const MatrixXd k2 = gibbs_kernel(c, 2.0).linear();
  CHECK(k1(0, 0) > k1(0, 1));
  CHECK(k1(0, 1) > k1(0, 2));
  CHECK((k2.array() > k1.array()).all());
}

TEST_CASE("masking then kernelization suppresses the diagonal") {
  Rng rng(3);
  const MatrixXd x = rng.normal_matrix(6, 2);
  const double penalty = 50.0;
  const double tau = 2.0;
  const auto k = gibbs_kernel(mask_self_distances(pairwise_cost(x, x, CostKind::SqEuclidean), penalty), tau);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(k.linear()(i, i) <= std::exp(-penalty / tau));
}

TEST_CASE("rng determinism and streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  const MatrixXd m1 = Rng(5).normal_matrix(4, 3);
  const MatrixXd m2 = Rng(5).normal_matrix(4, 3);
  CHECK(m1 == m2);
  const Rng root(9);
  CHECK(root.split(1).seed() != root.split(2).seed());
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(7) < 7u);
  }
}

}  // TEST_SUITE
