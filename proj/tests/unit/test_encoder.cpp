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


#include <cstring>

#include "support/checks.hpp"
#include "twinclip/encoder.hpp"
#include "twinclip/featurize.hpp"

namespace tc = twinclip;
using tc::Matrix;
using tc::Vector;

namespace {

tc::LinearEncoder random_encoder(Eigen::Index d, Eigen::Index f, std::mt19937_64& rng) {
  tc::LinearEncoder enc;
  enc.weight = tc::testing::random_matrix(d, f, rng, 1.0 / std::sqrt(static_cast<double>(f)));
  return enc;
}

tc::LoraAdapter random_adapter(Eigen::Index d, Eigen::Index f, Eigen::Index r, double alpha,
                               std::mt19937_64& rng) {
  tc::LoraAdapter a;
  a.a = tc::testing::random_matrix(r, f, rng, 0.3);
  a.b = tc::testing::random_matrix(d, r, rng, 0.3);
  a.alpha = alpha;
  return a;
}

// (W + (alpha/r) B A) x, normalized, with every product written as a loop.
Vector dense_oracle(const Vector& x, const tc::LinearEncoder& enc, const tc::LoraAdapter& ad) {
  const Eigen::Index d = enc.weight.rows(), f = enc.weight.cols(), r = ad.a.rows();
  const double scale = ad.alpha / static_cast<double>(r);
  Vector y = Vector::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < f; ++j) {
      double w = enc.weight(i, j);
      for (Eigen::Index k = 0; k < r; ++k) w += scale * ad.b(i, k) * ad.a(k, j);
      y[i] += w * x[j];
    }
  }
  double norm = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) norm += y[i] * y[i];
  return y / std::sqrt(norm);
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("fresh adapter leaves the base output bitwise unchanged") {
    std::mt19937_64 rng(1);
    const auto pair = tc::init_encoders(16, 64, 5);
    const auto adapter = tc::init_lora(16, 64, 4, 0.0, 6);
    CHECK(adapter.b.isZero());
    CHECK(adapter.alpha == 4.0);
    for (int i = 0; i < 50; ++i) {
      const Vector x = tc::testing::random_matrix(64, 1, rng).col(0);
      const Vector with = tc::encode(x, pair.image, &adapter);
      const Vector without = tc::encode(x, pair.image);
      CHECK(std::memcmp(with.data(), without.data(), sizeof(double) * 16) == 0);
    }
  }

  TEST_CASE("identity weight maps a unit vector to itself") {
    tc::LinearEncoder enc;
    enc.weight = Matrix::Identity(5, 5);
    Vector x(5);
    x << 0.6, 0.0, 0.8, 0.0, 0.0;
    CHECK(tc::encode(x, enc) == x);
  }

  TEST_CASE("encode matches the dense oracle") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      const auto enc = random_encoder(8, 40, rng);
      const auto ad = random_adapter(8, 40, 4, trial % 2 == 0 ? 4.0 : 2.5, rng);
      const Vector x = tc::testing::random_matrix(40, 1, rng).col(0);
      const Vector got = tc::encode(x, enc, &ad);
      CHECK((got - dense_oracle(x, enc, ad)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(got.norm() - 1.0) < 1e-9);
    }
  }

  TEST_CASE("batched encoding agrees with per-item encoding") {
    std::mt19937_64 rng(3);
    const auto enc = random_encoder(6, 20, rng);
    const auto ad = random_adapter(6, 20, 2, 2.0, rng);
    const Matrix features = tc::testing::random_matrix(20, 7, rng);
    const auto batch = tc::encode_batch(features, enc, &ad);
    for (Eigen::Index i = 0; i < 7; ++i) {
      const Vector single = tc::encode(Vector(features.col(i)), enc, &ad);
      CHECK((batch.unit.row(i).transpose() - single).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("concept and caption roles share the text encoder") {
    const auto pair = tc::init_encoders(16, 256, 9);
    const Vector a = tc::encode_text_shared("Yuelao", tc::TextRole::Concept, pair.text);
    const Vector b = tc::encode_text_shared("Yuelao", tc::TextRole::Caption, pair.text);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 16) == 0);
    const Vector c = tc::encode_text_shared("Yuelao holding the red thread under the moon",
                                            tc::TextRole::Caption, pair.text);
    CHECK((a - c).norm() > 1e-3);
    CHECK_ERROR_CODE(tc::encode_text_shared("", tc::TextRole::Concept, pair.text), tc::ErrorCode::EmptyText);
  }

  TEST_CASE("merge with a zero adapter returns the base weight") {
    const auto pair = tc::init_encoders(8, 32, 1);
    const auto ad = tc::init_lora(8, 32, 4, 0.0, 2);
    CHECK(tc::lora_merge(pair.text, ad).weight == pair.text.weight);
  }

  TEST_CASE("merged encoder matches adapter encoding") {
    std::mt19937_64 rng(4);
    const auto enc = random_encoder(8, 48, rng);
    const auto ad = random_adapter(8, 48, 4, 4.0, rng);
    const auto merged = tc::lora_merge(enc, ad);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Vector x = tc::testing::random_matrix(48, 1, rng).col(0);
      worst = std::max(worst, (tc::encode(x, merged) - tc::encode(x, enc, &ad)).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-10);
    const auto twice = tc::lora_merge(merged, ad);
    CHECK((twice.weight - merged.weight).cwiseAbs().maxCoeff() > 1e-6);
  }

  TEST_CASE("initialization is seeded and scaled") {
    const auto a = tc::init_encoders(8, 2048, 42);
    const auto b = tc::init_encoders(8, 2048, 42);
    CHECK(a.image.weight == b.image.weight);
    CHECK(a.text.weight == b.text.weight);
    CHECK(a.image.weight != a.text.weight);
    CHECK(a.image.weight != tc::init_encoders(8, 2048, 43).image.weight);
    for (const auto* enc : {&a.image, &a.text}) {
      for (Eigen::Index i = 0; i < 8; ++i) {
        CHECK(enc->weight.row(i).norm() > 0.8);
        CHECK(enc->weight.row(i).norm() < 1.2);
      }
      Matrix snapped = enc->weight;
      tc::snap_to_float32(snapped);
      CHECK(snapped == enc->weight);
    }
  }

  TEST_CASE("shape preconditions") {
    CHECK_ERROR_CODE(tc::init_encoders(1, 16, 0), tc::ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(tc::init_lora(8, 16, 0, 0.0, 0), tc::ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(tc::init_lora(8, 16, 9, 0.0, 0), tc::ErrorCode::InvalidArgument);
    const auto pair = tc::init_encoders(4, 16, 0);
    CHECK_ERROR_CODE(tc::encode(Vector::Ones(15), pair.image), tc::ErrorCode::DimensionMismatch);
    CHECK_ERROR_CODE(tc::encode(Vector::Zero(16), pair.image), tc::ErrorCode::DegenerateOutput);
    const auto wrong = tc::init_lora(4, 32, 2, 0.0, 0);
    CHECK_ERROR_CODE(tc::encode(Vector::Ones(16), pair.image, &wrong), tc::ErrorCode::DimensionMismatch);
  }

  TEST_CASE("outputs are unit norm") {
    std::mt19937_64 rng(8);
    const auto pair = tc::init_encoders(32, 128, 3);
    for (int i = 0; i < 100; ++i) {
      const Vector x = tc::testing::random_matrix(128, 1, rng, 1.0 + i).col(0);
      CHECK(std::abs(tc::encode(x, pair.image).norm() - 1.0) < 1e-9);
    }
  }

  TEST_CASE("weight checksum tracks content") {
    auto pair = tc::init_encoders(4, 16, 0);
    const auto before = tc::weight_checksum(pair.image.weight);
    CHECK(before == tc::weight_checksum(pair.image.weight));
    pair.image.weight(0, 0) += 1.0;
    CHECK(before != tc::weight_checksum(pair.image.weight));
  }
}
