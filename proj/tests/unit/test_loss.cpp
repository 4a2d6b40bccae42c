// Copyright 2026 The twinclip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "support/checks.hpp"
#include "twinclip/gradcheck.hpp"
#include "twinclip/loss.hpp"
#include "twinclip/train.hpp"

namespace tc = twinclip;
using tc::Matrix;
using tc::Role;
using tc::testing::random_batch;
using tc::testing::random_unit_rows;

namespace {

Matrix rows2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

tc::EmbeddingBatch swapped(const tc::EmbeddingBatch& b) {
  tc::EmbeddingBatch s;
  s[Role::ImagePos] = b[Role::ImageNeg];
  s[Role::ImageNeg] = b[Role::ImagePos];
  s[Role::CaptionPos] = b[Role::CaptionNeg];
  s[Role::CaptionNeg] = b[Role::CaptionPos];
  s[Role::ConceptPos] = b[Role::ConceptNeg];
  s[Role::ConceptNeg] = b[Role::ConceptPos];
  return s;
}

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("similarity of identity rows is the identity") {
    const Matrix eye = Matrix::Identity(2, 2);
    CHECK(tc::similarity(eye, eye) == eye);
  }

  TEST_CASE("similarity matches scalar dot products") {
    const Matrix a = rows2(0.6, 0.8, 1.0, 0.0);
    const Matrix b = rows2(0.0, 1.0, -0.8, 0.6);
    const Matrix s = tc::similarity(a, b);
    for (Eigen::Index i = 0; i < 2; ++i) {
      for (Eigen::Index j = 0; j < 2; ++j) CHECK(s(i, j) == doctest::Approx(tc::testing::dot_rows(a, i, b, j)));
    }
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
      const Matrix x = random_unit_rows(6, 5, rng), y = random_unit_rows(6, 5, rng);
      CHECK(tc::similarity(x, y).cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
    }
  }

  TEST_CASE("clip with a single pair is zero") {
    std::mt19937_64 rng(2);
    const auto out = tc::clip_loss(random_unit_rows(1, 4, rng), random_unit_rows(1, 4, rng), 0.07);
    CHECK(out.parts.at("i2t") == 0.0);
    CHECK(out.parts.at("t2i") == 0.0);
  }

  TEST_CASE("clip on an identity similarity matrix") {
    const Matrix eye = Matrix::Identity(2, 2);
    const auto out = tc::clip_loss(eye, eye, 1.0);
    const double expected_i2t = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK(out.parts.at("i2t") == doctest::Approx(expected_i2t).epsilon(1e-12));
    CHECK(out.parts.at("i2t") == doctest::Approx(0.3133).epsilon(1e-4));
    CHECK(out.value == doctest::Approx(0.6265).epsilon(1e-4));
  }

  TEST_CASE("identical embeddings give a uniform softmax") {
    Matrix same(2, 3);
    same.row(0) << 0.6, 0.8, 0.0;
    same.row(1) = same.row(0);
    for (double tau : {0.07, 1.0, 3.0}) {
      const auto out = tc::clip_loss(same, same, tau);
      CHECK(out.parts.at("i2t") == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
  }

  TEST_CASE("negclip single-pair examples") {
    Matrix i(1, 2), tp(1, 2), tn(1, 2);
    i << 1.0, 0.0;
    tp << 0.0, 1.0;
    tn << 0.0, -1.0;
    CHECK(tc::negclip_loss(i, tp, tn, 0.5).parts.at("i2t_neg") == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    tp << 1.0, 0.0;
    tn << -1.0, 0.0;
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0)));
    const auto out = tc::negclip_loss(i, tp, tn, 1.0);
    CHECK(out.parts.at("i2t_neg") == doctest::Approx(expected).epsilon(1e-12));
    CHECK(out.parts.at("i2t_neg") == doctest::Approx(0.1269).epsilon(1e-3));
  }

  TEST_CASE("all four losses match the scalar oracles") {
    std::mt19937_64 rng(3);
    const tc::LossConfig cfg;
    for (Eigen::Index n : {1, 2, 4, 9}) {
      for (int t = 0; t < 10; ++t) {
        const auto b = random_batch(n, 8, rng);
        const double tau = 0.05 + 0.1 * t;
        CHECK(std::abs(tc::clip_loss(b[Role::ImagePos], b[Role::CaptionPos], tau).value -
                       tc::testing::oracle_clip(b[Role::ImagePos], b[Role::CaptionPos], tau)) < 1e-9);
        CHECK(std::abs(tc::negclip_loss(b[Role::ImagePos], b[Role::CaptionPos], b[Role::CaptionNeg], tau).value -
                       tc::testing::oracle_negclip(b[Role::ImagePos], b[Role::CaptionPos], b[Role::CaptionNeg], tau)) <
              1e-9);
        CHECK(std::abs(tc::tripletclip_loss(b[Role::ImagePos], b[Role::ImageNeg], b[Role::CaptionPos],
                                            b[Role::CaptionNeg], tau)
                           .value -
                       tc::testing::oracle_tripletclip(b[Role::ImagePos], b[Role::ImageNeg], b[Role::CaptionPos],
                                                       b[Role::CaptionNeg], tau)) < 1e-9);
        CHECK(std::abs(tc::cultureclip_loss(b, cfg).value - tc::testing::oracle_cultureclip(b, cfg)) < 1e-9);
      }
    }
  }

  TEST_CASE("tripletclip is the sum of two negclip terms") {
    std::mt19937_64 rng(4);
    const auto b = random_batch(2, 6, rng);
    const double tau = 0.07;
    const double sum = tc::negclip_loss(b[Role::ImagePos], b[Role::CaptionPos], b[Role::CaptionNeg], tau).value +
                       tc::negclip_loss(b[Role::ImageNeg], b[Role::CaptionNeg], b[Role::CaptionPos], tau).value;
    const double got =
        tc::tripletclip_loss(b[Role::ImagePos], b[Role::ImageNeg], b[Role::CaptionPos], b[Role::CaptionNeg], tau).value;
    CHECK(std::abs(got - sum) < 1e-12);
  }

  TEST_CASE("cultureclip reductions") {
    std::mt19937_64 rng(5);
    auto b = random_batch(4, 8, rng);
    const double triplet =
        tc::tripletclip_loss(b[Role::ImagePos], b[Role::ImageNeg], b[Role::CaptionPos], b[Role::CaptionNeg], 0.07)
            .value;
    CHECK(tc::cultureclip_loss(b, {0.07, 1.0, 0.0}).value == triplet);
    b[Role::ConceptPos] = b[Role::CaptionPos];
    b[Role::ConceptNeg] = b[Role::CaptionNeg];
    CHECK(std::abs(tc::cultureclip_loss(b, {0.07, 0.5, 0.5}).value - triplet) < 1e-12);
  }

  TEST_CASE("loss preconditions") {
    std::mt19937_64 rng(6);
    const Matrix a = random_unit_rows(3, 4, rng);
    CHECK_ERROR_CODE(tc::clip_loss(a, a, 0.0), tc::ErrorCode::NonPositiveTau);
    CHECK_ERROR_CODE(tc::clip_loss(a, a, -1.0), tc::ErrorCode::NonPositiveTau);
    CHECK_ERROR_CODE(tc::clip_loss(a, random_unit_rows(2, 4, rng), 0.1), tc::ErrorCode::DimensionMismatch);
    CHECK_ERROR_CODE(tc::clip_loss(a, random_unit_rows(3, 5, rng), 0.1), tc::ErrorCode::DimensionMismatch);
    auto b = random_batch(3, 4, rng);
    b[Role::ConceptNeg] = Matrix();
    CHECK_ERROR_CODE(tc::cultureclip_loss(b, {}), tc::ErrorCode::MissingRole);
    CHECK_ERROR_CODE(tc::cultureclip_loss(random_batch(3, 4, rng), {0.07, 0.0, 0.0}),
                     tc::ErrorCode::InvalidArgument);
  }

  TEST_CASE("softmax rows are stochastic and stable") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100; ++t) {
      const Matrix logits = tc::testing::random_matrix(5, 9, rng, t < 50 ? 1.0 : 500.0);
      const Matrix p = tc::row_softmax(logits);
      CHECK(p.allFinite());
      for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
    }
  }

  TEST_CASE("algebraic invariants over random batches") {
    std::mt19937_64 rng(8);
    const tc::LossConfig cfg;
    for (int t = 0; t < 100; ++t) {
      const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 8);
      const auto b = random_batch(n, 8, rng);
      const double tau = 0.03 + 0.01 * (t % 20);
      const double clip = tc::clip_loss(b[Role::ImagePos], b[Role::CaptionPos], tau).value;
      const double neg = tc::negclip_loss(b[Role::ImagePos], b[Role::CaptionPos], b[Role::CaptionNeg], tau).value;
      CHECK(clip >= 0.0);
      CHECK(neg >= clip);
      CHECK(std::abs(clip - tc::clip_loss(b[Role::CaptionPos], b[Role::ImagePos], tau).value) < 1e-12);

      const auto s = swapped(b);
      const double trip =
          tc::tripletclip_loss(b[Role::ImagePos], b[Role::ImageNeg], b[Role::CaptionPos], b[Role::CaptionNeg], tau)
              .value;
      const double trip_swapped =
          tc::tripletclip_loss(s[Role::ImagePos], s[Role::ImageNeg], s[Role::CaptionPos], s[Role::CaptionNeg], tau)
              .value;
      CHECK(std::abs(trip - trip_swapped) < 1e-12);
      CHECK(std::abs(tc::cultureclip_loss(b, cfg).value - tc::cultureclip_loss(s, cfg).value) < 1e-12);
      CHECK(tc::cultureclip_loss(b, cfg).value >= 0.0);
    }
  }

  TEST_CASE("temperature does not move the row argmax") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
      const Matrix s = tc::similarity(random_unit_rows(6, 4, rng), random_unit_rows(6, 4, rng));
      const Matrix p1 = tc::row_softmax(s / 0.07);
      const Matrix p2 = tc::row_softmax(s / 2.0);
      for (Eigen::Index i = 0; i < 6; ++i) {
        Eigen::Index a1 = 0, a2 = 0;
        p1.row(i).maxCoeff(&a1);
        p2.row(i).maxCoeff(&a2);
        CHECK(a1 == a2);
      }
    }
  }

  TEST_CASE("analytic gradients agree with finite differences") {
    for (auto kind : {tc::LossKind::Clip, tc::LossKind::NegClip, tc::LossKind::TripletClip,
                      tc::LossKind::CultureClip}) {
      CAPTURE(tc::to_string(kind));
      CHECK(tc::check_loss_gradients(kind, 4, 8, 1, 1e-5).max_relative_error < 1e-4);
    }
  }

  TEST_CASE("single-pair clip has zero gradient") {
    std::mt19937_64 rng(10);
    const auto out = tc::clip_loss(random_unit_rows(1, 8, rng), random_unit_rows(1, 8, rng), 0.07);
    for (const auto& g : out.grads) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("grad_check validates eps") {
    const tc::ValueFn f = [](const std::vector<Matrix>& x) { return x[0].sum(); };
    CHECK_ERROR_CODE(tc::grad_check(f, {Matrix::Ones(1, 1)}, {Matrix::Ones(1, 1)}, 1e-2),
                     tc::ErrorCode::InvalidArgument);
    CHECK(tc::grad_check(f, {Matrix::Ones(2, 2)}, {Matrix::Ones(2, 2)}, 1e-5).max_relative_error < 1e-8);
    CHECK(tc::grad_check(f, {Matrix::Ones(1, 1)}, {Matrix::Constant(1, 1, 2.0)}, 1e-5).max_relative_error > 0.4);
  }
}
