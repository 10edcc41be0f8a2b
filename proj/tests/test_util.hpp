#ifndef DNOC_TEST_UTIL_HPP
#define DNOC_TEST_UTIL_HPP

#include <random>
#include <string>
#include <vector>

#include "dnoc/pipeline.hpp"

namespace dnoc::testing {

// Words a, bed, cat, dog plus the five specials: N_t = 9.
inline Vocabulary tiny_vocab() { return Vocabulary::build({{"a", "dog"}, {"a", "cat"}, {"a", "bed"}, {"a", "dog"}}, 1); }

inline VectorXd random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

inline Detection detection(int dim, int label, double score, std::mt19937_64& rng) {
  return {random_vector(dim, rng), label, score};
}

/// Batch of sentences of length 4 (three words + <EOS>) over tiny_vocab with
/// detections for dog (class 0), cat (1) and an undetected class 2.
inline TrainBatch tiny_batch(const Vocabulary& vocab, int image_dim, int feature_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::vector<std::string>> sentences = {{"a", "dog", "a"}, {"a", "cat", "dog"}, {"a", "bed", "a"}};
  std::vector<TrainExample> examples;
  for (const auto& s : sentences) {
    TrainExample ex;
    ex.feature = random_vector(image_dim, rng);
    ex.tokens = vocab.encode(s);
    ex.tokens.push_back(vocab.eos());
    ex.detections = {detection(feature_dim, 0, 0.9, rng), detection(feature_dim, 1, 0.8, rng),
                     detection(feature_dim, 2, 0.7, rng)};
    examples.push_back(ex);
  }
  return make_batch(examples, vocab.pad());
}

// Detector classes: dog, cat, zebra (the last is outside the vocabulary).
inline std::vector<std::string> tiny_classes() { return {"dog", "cat", "zebra"}; }

}  // namespace dnoc::testing

#endif  // DNOC_TEST_UTIL_HPP
