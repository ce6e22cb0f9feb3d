// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/contrastive.hpp"

#include <algorithm>
#include <iterator>
#include <numeric>

namespace fm3 {

std::uint64_t potential_pair_count(std::uint64_t k) { return k < 2 ? 0 : k * (k - 1) / 2; }

FeasiblePairs enumerate_pairs(std::span<const std::size_t> labels) {
  FeasiblePairs out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] == labels[j]) {
        out.positives.push_back({i, j, Polarity::positive});
      } else {
        out.negatives.push_back({i, j, Polarity::negative});
      }
    }
  }
  return out;
}

namespace {

void draw(std::vector<ContrastivePair>& feasible, std::size_t r, Rng& rng, std::vector<ContrastivePair>& out) {
  if (feasible.size() > r) {
    // Partial Fisher-Yates: the first r slots become a uniform sample.
    for (std::size_t i = 0; i < r; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, feasible.size() - 1);
      std::swap(feasible[i], feasible[pick(rng)]);
    }
    feasible.resize(r);
  }
  std::bernoulli_distribution flip(0.5);
  for (auto p : feasible) {
    if (flip(rng)) std::swap(p.anchor, p.other);
    out.push_back(p);
  }
}

}  // namespace

std::vector<ContrastivePair> mine_pairs(std::span<const std::size_t> labels, const PairMiningConfig& cfg) {
  if (cfg.R < 1) throw std::invalid_argument("R must be at least 1");
  if (labels.size() < 2) throw NoPositivePairsError();
  FeasiblePairs feasible = enumerate_pairs(labels);
  if (feasible.positives.empty()) throw NoPositivePairsError();
  if (feasible.negatives.empty()) throw NoNegativePairsError();
  Rng rng(cfg.rng_seed);
  std::vector<ContrastivePair> out;
  out.reserve(2 * cfg.R);
  draw(feasible.positives, cfg.R, rng, out);
  draw(feasible.negatives, cfg.R, rng, out);
  return out;
}

std::vector<ContrastivePair> mine_pairs(std::span<const LabeledExample> examples, const PairMiningConfig& cfg) {
  std::vector<std::size_t> labels;
  labels.reserve(examples.size());
  for (const auto& e : examples) labels.push_back(e.label);
  return mine_pairs(labels, cfg);
}

Var mnr_loss(Var anchor_embs, Var positive_embs, double scale) {
  const Tensor& a = anchor_embs.value();
  if (a.rank() != 2 || a.shape() != positive_embs.value().shape()) {
    throw ShapeError("mnr_loss: anchors and positives must be equally shaped matrices");
  }
  const std::size_t n = a.dim(0);
  if (n < 2) throw std::invalid_argument("mnr_loss needs at least two pairs");
  Var sims = fm3::scale(matmul(l2_normalize_rows(anchor_embs), transpose(l2_normalize_rows(positive_embs))), scale);
  std::vector<std::size_t> targets(n);
  std::iota(targets.begin(), targets.end(), std::size_t{0});
  return softmax_cross_entropy(sims, targets);
}

Var explicit_pair_loss(Var anchor_embs, Var other_embs, std::span<const Polarity> polarity, double margin) {
  const std::size_t n = polarity.size();
  if (n == 0) throw std::invalid_argument("explicit_pair_loss on an empty pair list");
  if (anchor_embs.value().rank() != 2 || anchor_embs.value().dim(0) != n) {
    throw ShapeError("explicit_pair_loss: one embedding row per pair required");
  }
  Tape& tape = *anchor_embs.tape;
  Var cos = cosine_rows(anchor_embs, other_embs);
  Tensor pos_mask({n}), neg_mask({n});
  for (std::size_t i = 0; i < n; ++i) (polarity[i] == Polarity::positive ? pos_mask : neg_mask)[i] = 1.0;
  Var pos_term = mul(add_scalar(scale(cos, -1.0), 1.0), tape.constant(std::move(pos_mask)));
  Var neg_term = mul(relu(add_scalar(cos, -margin)), tape.constant(std::move(neg_mask)));
  return mean(add(pos_term, neg_term));
}

}  // namespace fm3
