#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "keci/error.hpp"
#include "keci/random.hpp"

namespace keci::corpus {

struct Fold {
  std::vector<std::size_t> train;  // document indices
  std::vector<std::size_t> test;
};

/// Seeded shuffle, then round-robin assignment of documents to k test folds.
inline std::vector<Fold> kfold_split(std::size_t num_docs, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("kfold_split needs k >= 2");
  if (k > num_docs) {
    throw ArgumentError("kfold_split: k = " + std::to_string(k) + " exceeds " + std::to_string(num_docs) +
                        " documents");
  }
  std::vector<std::size_t> order(num_docs);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<Fold> folds(k);
  for (std::size_t p = 0; p < num_docs; ++p) {
    for (std::size_t f = 0; f < k; ++f) {
      (p % k == f ? folds[f].test : folds[f].train).push_back(order[p]);
    }
  }
  return folds;
}

template <typename Item>
std::vector<Item> select(const std::vector<Item>& items, const std::vector<std::size_t>& index) {
  std::vector<Item> out;
  out.reserve(index.size());
  for (auto i : index) out.push_back(items.at(i));
  return out;
}

}  // namespace keci::corpus
