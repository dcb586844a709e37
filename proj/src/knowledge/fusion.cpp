#include "todkat/knowledge/fusion.hpp"

#include <algorithm>
#include <numeric>

#include "todkat/numerics/ops.hpp"

namespace todkat {

SourceSelection select_source(const Tensor& scores, double temperature, Rng* rng) {
  if (!(temperature > 0)) throw ContractError("select_source: temperature must be positive");
  if (scores.rank() != 1) throw DimensionError("select_source: scores must be a vector, got " + shape_str(scores.shape()));
  const auto n = scores.dim(0);
  std::vector<double> noise(n, 0.0);
  if (rng) {
    for (auto& v : noise) {
      const double g1 = rng->gumbel();
      const double g0 = rng->gumbel();
      v = g1 - g0;
    }
  }
  SourceSelection s;
  s.probability = sigmoid(scores);
  auto perturbed = add(scores, Tensor::vector(noise));
  s.soft = sigmoid(scale(perturbed, 1.0 / temperature));
  std::vector<double> hard(n);
  for (std::size_t i = 0; i < n; ++i) hard[i] = perturbed.values()[i] >= 0.0 ? 1.0 : 0.0;
  s.indicator = straight_through(Tensor::vector(std::move(hard)), s.soft);
  return s;
}

PointerGate PointerGate::create(ParameterStore& store, const std::string& name, std::size_t d_model, const Rng& rng) {
  return {store.add_uniform(name + ".w", {3 * d_model}, 3 * d_model, rng)};
}

Tensor PointerGate::scores(const Tensor& u, const Tensor& retrieved_mean, const Tensor& generated_mean) const {
  auto x = concat({u, retrieved_mean, generated_mean}, 1);
  if (x.dim(1) != weight.dim(0)) {
    throw DimensionError("pointer gate: features " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
  }
  auto s = matmul(x, reshape(weight, {weight.dim(0), 1}));
  return reshape(s, {s.dim(0)});
}

Tensor mix_sources(const Tensor& indicator, const Tensor& retrieved, const Tensor& generated, std::size_t k) {
  if (retrieved.shape() != generated.shape() || retrieved.rank() != 2 || indicator.rank() != 1 ||
      indicator.dim(0) * k != retrieved.dim(0)) {
    throw DimensionError("mix_sources: indicator " + shape_str(indicator.shape()) + ", items " +
                         shape_str(retrieved.shape()) + " and " + shape_str(generated.shape()));
  }
  const auto n = indicator.dim(0);
  // expand I from [N] to one entry per item row
  std::vector<double> expand(n * k * n, 0.0);
  for (std::size_t r = 0; r < n * k; ++r) expand[r * n + r / k] = 1.0;
  auto per_row = reshape(matmul(Tensor::from({n * k, n}, std::move(expand)), reshape(indicator, {n, 1})), {n * k});
  auto complement = add_scalar(scale(per_row, -1.0), 1.0);
  return add(scale_rows(retrieved, per_row), scale_rows(generated, complement));
}

KnowledgeFusion KnowledgeFusion::create(ParameterStore& store, const std::string& name, std::size_t d_model,
                                        std::size_t d_z, const Rng& rng) {
  KnowledgeFusion f;
  f.d_model_ = d_model;
  f.d_z_ = d_z;
  f.w_alpha_ = store.add_uniform(name + ".alpha", {d_model + d_z, d_z + d_model}, d_model + d_z, rng);
  f.relation_attn_ = nn::MultiHeadAttention::create(store, name + ".relation", d_model, d_model, 1, rng);
  return f;
}

std::vector<std::int64_t> KnowledgeFusion::canonical_order(const Tensor& items, std::size_t k) {
  const auto rows = items.dim(0), cols = items.dim(1);
  const auto v = items.values();
  std::vector<std::int64_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t start = 0; start < rows; start += k) {
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(start + k), [&](auto a, auto b) {
                       return std::lexicographical_compare(v.begin() + a * cols, v.begin() + (a + 1) * cols,
                                                           v.begin() + b * cols, v.begin() + (b + 1) * cols);
                     });
  }
  return order;
}

Tensor KnowledgeFusion::block_mask_scores(const Tensor& zu, const Tensor& sorted_items, std::size_t k) const {
  const auto n = zu.dim(0);
  auto v = tanh(matmul(sorted_items, w_alpha_));
  auto scores = matmul(zu, transpose(v));  // [N × N·K]
  std::vector<std::uint8_t> other(n * n * k, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i * k; j < (i + 1) * k; ++j) other[i * n * k + j] = 0;
  return masked_fill(scores, other, kMaskedScore);
}

KnowledgeFusion::Output KnowledgeFusion::operator()(const Tensor& z, const Tensor& u, const std::vector<Tensor>& items,
                                                    std::size_t k) const {
  if (items.empty()) throw ContractError("fuse_knowledge: no relations");
  if (k == 0) throw ContractError("fuse_knowledge: K must be positive");
  const auto n = z.dim(0);
  if (z.rank() != 2 || u.rank() != 2 || u.dim(0) != n || z.dim(1) != d_z_ || u.dim(1) != d_model_) {
    throw DimensionError("fuse_knowledge: z " + shape_str(z.shape()) + ", u " + shape_str(u.shape()) +
                         " for fusion with d_model " + std::to_string(d_model_) + ", d_z " + std::to_string(d_z_));
  }
  const auto zu = concat({z, u}, 1);
  Output out;
  for (const auto& it : items) {
    if (it.rank() != 2 || it.dim(0) != n * k || it.dim(1) != w_alpha_.dim(0)) {
      throw DimensionError("fuse_knowledge: items " + shape_str(it.shape()) + " against W_alpha " +
                           shape_str(w_alpha_.shape()) + " with " + std::to_string(n) + "x" + std::to_string(k) +
                           " items expected");
    }
    // Sorting each utterance's items makes the weighted sum independent of input order.
    const auto order = canonical_order(it, k);
    auto sorted = gather_rows(it, order);
    auto alpha = softmax(block_mask_scores(zu, sorted, k), 1);
    out.per_relation.push_back(matmul(alpha, slice_cols(sorted, 0, d_model_)));
    std::vector<std::vector<double>> a(n, std::vector<double>(k));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) a[i][static_cast<std::size_t>(order[i * k + j]) - i * k] = alpha.at(i, i * k + j);
    out.alpha.push_back(std::move(a));
  }
  const auto r = items.size();
  // rows are relation-major: row q·N + i is relation q of utterance i
  auto stacked = r == 1 ? out.per_relation[0] : concat(out.per_relation, 0);
  std::vector<std::uint8_t> mask(r * n * r * n, 1);
  for (std::size_t a = 0; a < r * n; ++a)
    for (std::size_t b = 0; b < r * n; ++b)
      if (a % n == b % n) mask[a * r * n + b] = 0;
  auto attended = relation_attn_(stacked, stacked, mask);
  std::vector<double> pool(n * r * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < r; ++q) pool[i * r * n + q * n + i] = 1.0 / static_cast<double>(r);
  out.fused = matmul(Tensor::from({n, r * n}, std::move(pool)), attended);
  return out;
}

}  // namespace todkat
