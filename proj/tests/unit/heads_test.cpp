#include <gtest/gtest.h>

#include "geovit/errors.hpp"
#include "geovit/heads.hpp"
#include "test_util.hpp"

namespace geovit {
namespace {

using test::random_tensor;
using test::to_vector;

ModelConfig small_config() {
  ModelConfig c = ModelConfig::tiny(Variant::kCo2);
  c.tap_depths = {1, 2};
  return c;
}

TEST(SegDecoder, ZeroWeightsGiveClassifierBias) {
  const ModelConfig c = small_config();
  ParamStore<float> store;
  heads::SegDecoder<float> dec(store, "dec", c);
  dec.classify().bias().mutable_data()[0] = 0.25f;
  dec.classify().bias().mutable_data()[1] = -1.5f;
  Rng rng(1);
  heads::TapMap<float> taps;
  for (std::size_t d : c.tap_depths) taps[d] = random_tensor<float>(rng, {2, c.num_tokens(), c.embed_dim});
  auto logits = dec(taps);
  ASSERT_EQ(logits.shape(), (Shape{2, 2, c.image_size, c.image_size}));
  const std::size_t plane = c.image_size * c.image_size;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      EXPECT_EQ(logits.data()[(b * 2 + 0) * plane + i], 0.25f);
      EXPECT_EQ(logits.data()[(b * 2 + 1) * plane + i], -1.5f);
    }
}

TEST(SegDecoder, SingleTapIsPerTokenLinearClassifier) {
  ModelConfig c = small_config();
  c.tap_depths = {2};
  c.patch_size = 1;
  c.image_size = 4;
  c.decoder_dim = c.embed_dim;
  ParamStore<double> store;
  heads::SegDecoder<double> dec(store, "dec", c);
  nn::init_params(store, 3);
  // identity projection and fusion
  for (nn::Linear<double>* lin : {&dec.tap_projection(2), &dec.fuse()}) {
    auto w = lin->weight().mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < c.embed_dim; ++i) w[i * c.embed_dim + i] = 1.0;
    auto b = lin->bias().mutable_data();
    std::fill(b.begin(), b.end(), 0.0);
  }
  Rng rng(3);
  auto tokens = random_tensor<double>(rng, {1, 16, c.embed_dim});
  auto logits = dec({{2, tokens}});
  auto expected = dec.classify()(tokens);  // [1, 16, 2]
  for (std::size_t t = 0; t < 16; ++t)
    for (std::size_t k = 0; k < 2; ++k)
      EXPECT_NEAR(logits.data()[k * 16 + t], expected.data()[t * 2 + k], 1e-12);
}

TEST(SegDecoder, MissingTapIsContractViolation) {
  const ModelConfig c = small_config();
  ParamStore<float> store;
  heads::SegDecoder<float> dec(store, "dec", c);
  heads::TapMap<float> taps;
  taps[1] = Tensor<float>::zeros({1, c.num_tokens(), c.embed_dim});
  EXPECT_THROW(dec(taps), ContractViolation);
  taps[2] = Tensor<float>::zeros({1, c.num_tokens() + 1, c.embed_dim});
  EXPECT_THROW(dec(taps), ContractViolation);
}

TEST(DenseHead, ZeroWeightsGiveBias) {
  ParamStore<float> store;
  heads::DenseHead<float> head(store, "h", 8, 8, 2);
  head.fc2().bias().mutable_data()[0] = 3.0f;
  Rng rng(4);
  auto y = head(random_tensor<float>(rng, {5, 8}));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(y.data()[i * 2], 3.0f);
    EXPECT_EQ(y.data()[i * 2 + 1], 0.0f);
  }
}

TEST(DenseHead, HeadsAreIndependent) {
  ParamStore<double> store;
  heads::DenseHead<double> fuel(store, "fuel", 8, 8, 2);
  heads::DenseHead<double> power(store, "power", 8, 8, 1, heads::Activation::kIdentity);
  nn::init_params(store, 5);
  Rng rng(5);
  auto x = random_tensor<double>(rng, {3, 8});
  auto before = to_vector(fuel(x));
  auto w = power.fc1().weight().mutable_data();
  for (auto& v : w) v *= -7.0;
  EXPECT_EQ(to_vector(fuel(x)), before);
}

TEST(DenseHead, IdentityActivationIsAffine) {
  ParamStore<double> store;
  heads::DenseHead<double> head(store, "h", 4, 6, 1, heads::Activation::kIdentity);
  nn::init_params(store, 6);
  Rng rng(6);
  auto a = random_tensor<double>(rng, {1, 4});
  auto b = random_tensor<double>(rng, {1, 4});
  const double fa = head(a).item(), fb = head(b).item(), fm = head(scale(add(a, b), 0.5)).item();
  EXPECT_NEAR(fm, 0.5 * (fa + fb), 1e-12);
}

TEST(WeatherProjector, WrongLengthIsContractViolation) {
  ParamStore<float> store;
  heads::WeatherProjector<float> proj(store, "w", 16);
  EXPECT_EQ(proj(Tensor<float>::zeros({2, 3})).shape(), (Shape{2, 16}));
  EXPECT_THROW(proj(Tensor<float>::zeros({2, 4})), ContractViolation);
}

TEST(MeanPool, AveragesTokensAndSpreadsGradient) {
  auto x = Tensor<double>({1, 3, 2}, {1, 2, 3, 4, 5, 9}, true);
  Tape<double> tape;
  auto pooled = heads::mean_pool(x);
  EXPECT_EQ(to_vector(pooled), (std::vector<double>{3, 5}));
  tape.backward(sum(mul(pooled, Tensor<double>({1, 2}, {1.0, 2.0}))));
  const std::vector<double> expected{1.0 / 3, 2.0 / 3, 1.0 / 3, 2.0 / 3, 1.0 / 3, 2.0 / 3};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(x.grad()[i], expected[i], 1e-15);
}

}  // namespace
}  // namespace geovit
