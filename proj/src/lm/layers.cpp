#include "todkat/lm/layers.hpp"

#include <cmath>

#include "todkat/numerics/ops.hpp"

namespace todkat::nn {

AttentionMask causal_mask(std::size_t n) {
  AttentionMask m(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = 1;
  return m;
}

AttentionMask key_mask(std::size_t queries, const std::vector<std::uint8_t>& key_blocked) {
  AttentionMask m;
  m.reserve(queries * key_blocked.size());
  for (std::size_t i = 0; i < queries; ++i) m.insert(m.end(), key_blocked.begin(), key_blocked.end());
  return m;
}

AttentionMask with_open_prefix(const AttentionMask& mask, std::size_t queries, std::size_t columns) {
  const std::size_t keys = queries == 0 ? 0 : mask.size() / queries;
  AttentionMask out;
  out.reserve(queries * (keys + columns));
  for (std::size_t i = 0; i < queries; ++i) {
    out.insert(out.end(), columns, 0);
    out.insert(out.end(), mask.begin() + static_cast<std::ptrdiff_t>(i * keys),
               mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * keys));
  }
  return out;
}

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                      const Rng& rng, bool with_bias) {
  Linear l;
  l.weight = store.add_uniform(name + ".w", {in, out}, in, rng);
  if (with_bias) l.bias = store.add_constant(name + ".b", {out}, 0.0);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.rank() == 1) {
    auto y = (*this)(reshape(x, {1, x.dim(0)}));
    return reshape(y, {y.dim(1)});
  }
  auto y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, std::size_t dim) {
  return {store.add_constant(name + ".gain", {dim}, 1.0), store.add_constant(name + ".bias", {dim}, 0.0)};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain, bias, 1e-5); }

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name,
                                              std::size_t query_dim, std::size_t model_dim, std::size_t heads,
                                              const Rng& rng) {
  if (heads == 0 || model_dim % heads != 0) {
    throw DimensionError("attention " + name + ": model dim " + std::to_string(model_dim) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  MultiHeadAttention a;
  a.heads = heads;
  a.query = Linear::create(store, name + ".q", query_dim, model_dim, rng);
  a.key = Linear::create(store, name + ".k", model_dim, model_dim, rng);
  a.value = Linear::create(store, name + ".v", model_dim, model_dim, rng);
  a.out = Linear::create(store, name + ".o", model_dim, model_dim, rng);
  return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& q, const Tensor& kv, const AttentionMask& mask,
                                      std::vector<Tensor>* weights) const {
  const std::size_t tq = q.dim(0), tk = kv.dim(0);
  if (!mask.empty() && mask.size() != tq * tk) {
    throw DimensionError("attention mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(tq) + "x" + std::to_string(tk) + " scores");
  }
  auto Q = query(q), K = key(kv), V = value(kv);
  const std::size_t d = Q.dim(1), dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = heads == 1 ? Q : slice_cols(Q, h * dh, (h + 1) * dh);
    auto kh = heads == 1 ? K : slice_cols(K, h * dh, (h + 1) * dh);
    auto vh = heads == 1 ? V : slice_cols(V, h * dh, (h + 1) * dh);
    auto scores = scale(matmul(qh, transpose(kh)), scale_factor);
    if (!mask.empty()) scores = masked_fill(scores, mask, kMaskedScore);
    auto attn = softmax(scores, 1);
    if (weights) weights->push_back(attn);
    outs.push_back(matmul(attn, vh));
  }
  return out(heads == 1 ? outs[0] : concat(outs, 1));
}

FeedForward FeedForward::create(ParameterStore& store, const std::string& name, std::size_t dim,
                                std::size_t hidden, const Rng& rng) {
  return {Linear::create(store, name + ".in", dim, hidden, rng), Linear::create(store, name + ".out", hidden, dim, rng)};
}

Tensor FeedForward::operator()(const Tensor& x) const { return out(relu(in(x))); }

TransformerBlock TransformerBlock::create(ParameterStore& store, const std::string& name, std::size_t dim,
                                          std::size_t heads, std::size_t hidden, bool with_cross,
                                          const Rng& rng) {
  TransformerBlock b;
  b.ln_self = LayerNorm::create(store, name + ".ln_self", dim);
  b.self_attn = MultiHeadAttention::create(store, name + ".self", dim, dim, heads, rng);
  if (with_cross) {
    b.ln_cross = LayerNorm::create(store, name + ".ln_cross", dim);
    b.cross_attn = MultiHeadAttention::create(store, name + ".cross", dim, dim, heads, rng);
  }
  b.ln_ff = LayerNorm::create(store, name + ".ln_ff", dim);
  b.ff = FeedForward::create(store, name + ".ff", dim, hidden, rng);
  return b;
}

Tensor TransformerBlock::operator()(const Tensor& x, const Context& ctx) const {
  static const AttentionMask kNone;
  auto h = ln_self(x);
  auto kv = ctx.memory ? concat({*ctx.memory, h}, 0) : h;
  auto y = add(x, self_attn(h, kv, ctx.self_mask ? *ctx.self_mask : kNone));
  if (cross_attn) {
    if (!ctx.cross) throw ContractError("transformer block: cross-attention input missing");
    y = add(y, (*cross_attn)(ln_cross(y), *ctx.cross, ctx.cross_mask ? *ctx.cross_mask : kNone));
  }
  return add(y, ff(ln_ff(y)));
}

Tensor sinusoidal_positions(std::size_t positions, std::size_t dim) {
  std::vector<double> v(positions * dim);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      v[p * dim + i] = i % 2 == 0 ? std::sin(p * rate) : std::cos(p * rate);
    }
  }
  return Tensor::from({positions, dim}, std::move(v));
}

}  // namespace todkat::nn
