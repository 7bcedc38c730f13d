#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "protoseg/error.hpp"
#include "protoseg/objectives.hpp"
#include "protoseg/rng.hpp"
#include "test_util.hpp"

using namespace protoseg;

namespace {

constexpr double kEps = 1e-7;  // clipping constant pinned by the loss contract

double bce_oracle(double p, double y) {
  const double pc = std::clamp(p, kEps, 1.0 - kEps);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

}  // namespace

TEST_CASE("few_shot_loss analytic anchors") {
  Mask target(4, 4);
  for (int y = 0; y < 4; ++y) target.at(y, y % 4) = 1;

  // perfect binary prediction: only the clipping residual remains
  Tensor perfect(1, 1, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) perfect.at(0, 0, y, x) = target.at(y, x);
  CHECK(few_shot_loss(perfect, target) < 1e-6);

  // maximal uncertainty: exactly ln 2
  Tensor half(1, 1, 4, 4, 0.5);
  CHECK(std::abs(few_shot_loss(half, target) - std::log(2.0)) <= 1e-9);
}

TEST_CASE("few_shot_loss matches the scalar-loop oracle") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor pred = testutil::random_tensor(1, 1, 4, 4, rng, 0.001, 0.999);
    Mask target = testutil::random_mask(4, 4, rng);
    double want = 0.0;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        want += bce_oracle(pred.at(0, 0, y, x), target.at(y, x));
    want /= 16.0;
    CHECK(std::abs(few_shot_loss(pred, target) - want) <= 1e-6);
  }
  CHECK_THROWS_AS(few_shot_loss(Tensor(1, 1, 4, 4, 0.5), Mask(8, 8)), Error);
  CHECK_THROWS_AS(few_shot_loss(Tensor(1, 2, 4, 4, 0.5), Mask(4, 4)), Error);
}

TEST_CASE("surrogate_loss analytic anchors") {
  Rng rng(72);
  Image clean = testutil::random_image(3, 4, 4, rng);
  Image half(3, 4, 4, 0.5);
  // at 0.5 both cross-entropy terms contribute ln 2 regardless of the target
  CHECK(std::abs(surrogate_loss(half, clean) - std::log(2.0)) <= 1e-9);

  Image binary(1, 4, 4);
  for (std::size_t i = 0; i < binary.pix.size(); ++i)
    binary.pix[i] = i % 2 ? 1.0 : 0.0;
  CHECK(surrogate_loss(binary, binary) < 1e-6);
}

TEST_CASE("surrogate_loss matches the scalar-loop oracle") {
  Rng rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    Image rec = testutil::random_image(1, 2, 2, rng);
    Image clean = testutil::random_image(1, 2, 2, rng);
    double want = 0.0;
    for (std::size_t i = 0; i < rec.pix.size(); ++i)
      want += bce_oracle(rec.pix[i], clean.pix[i]);
    want /= static_cast<double>(rec.pix.size());
    CHECK(std::abs(surrogate_loss(rec, clean) - want) <= 1e-6);
  }
}

TEST_CASE("surrogate_loss validates shapes and target range") {
  Image a(3, 4, 4, 0.5), b(3, 4, 8, 0.5);
  CHECK_THROWS_AS(surrogate_loss(a, b), Error);
  Image out_of_range(3, 4, 4, 0.5);
  out_of_range.pix[0] = 1.5;
  CHECK_THROWS_WITH_AS(surrogate_loss(a, out_of_range),
                       doctest::Contains("RangeViolation"), Error);
}

TEST_CASE("both losses are minimized at reconstruction equal to target") {
  // grid search over constant predictions; the minimum must sit at the target
  // value (binary entropy of x for soft targets, ~0 for binary targets)
  for (double x : {0.0, 0.3, 1.0}) {
    Image clean(1, 2, 2, x);
    double best_loss = 1e300, best_p = -1.0;
    for (int i = 1; i < 100; ++i) {
      const double p = i / 100.0;
      Image rec(1, 2, 2, p);
      const double loss = surrogate_loss(rec, clean);
      if (loss < best_loss) {
        best_loss = loss;
        best_p = p;
      }
    }
    const double clamped_target = std::clamp(x, 0.01, 0.99);
    CHECK(std::abs(best_p - clamped_target) <= 0.011);
    const double entropy = x <= 0.0 || x >= 1.0
                               ? 0.0
                               : -(x * std::log(x) + (1 - x) * std::log(1 - x));
    CHECK(best_loss >= entropy - 1e-9);
  }
}

TEST_CASE("few_shot_loss is permutation-equivariant") {
  Rng rng(74);
  Tensor pred = testutil::random_tensor(1, 1, 4, 4, rng, 0.01, 0.99);
  Mask target = testutil::random_mask(4, 4, rng);
  const double base = few_shot_loss(pred, target);

  std::vector<std::size_t> perm(16);
  for (std::size_t i = 0; i < 16; ++i) perm[i] = i;
  rng.shuffle(perm);
  Tensor pred2(1, 1, 4, 4);
  Mask target2(4, 4);
  for (std::size_t i = 0; i < 16; ++i) {
    pred2[i] = pred[perm[i]];
    target2.pix[i] = target.pix[perm[i]];
  }
  CHECK(few_shot_loss(pred2, target2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("joint_loss arithmetic and the bitwise zero-lambda path") {
  CHECK(joint_loss(0.5, 0.25, 1.0) == doctest::Approx(0.75));
  CHECK(joint_loss(1.0, 0.5, 2.0) == doctest::Approx(2.0));

  // lambda = 0 returns the few-shot term without touching it
  const double few = 0.1 + 0.2;  // deliberately non-representable sum
  CHECK(joint_loss(few, 123.456, 0.0) == few);

  CHECK_THROWS_WITH_AS(joint_loss(1.0, 1.0, -0.5),
                       doctest::Contains("NegativeLambda"), Error);
}

TEST_CASE("loss values are always nonnegative") {
  Rng rng(75);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor pred = testutil::random_tensor(1, 1, 3, 3, rng, 0.0, 1.0);
    Mask target = testutil::random_mask(3, 3, rng);
    CHECK(few_shot_loss(pred, target) >= 0.0);
    Image rec = testutil::random_image(2, 3, 3, rng);
    Image clean = testutil::random_image(2, 3, 3, rng);
    CHECK(surrogate_loss(rec, clean) >= 0.0);
  }
}
