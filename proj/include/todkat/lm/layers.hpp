#pragma once

// Transformer building blocks shared by the language model, the knowledge
// generator and the classifier. Parameters live in a caller-owned store.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "todkat/numerics/params.hpp"
#include "todkat/numerics/rng.hpp"
#include "todkat/numerics/tensor.hpp"

namespace todkat::nn {

/// Row-major [queries × keys]; nonzero entries block attention.
using AttentionMask = std::vector<std::uint8_t>;

AttentionMask causal_mask(std::size_t n);
/// Blocks key j for every query when key_blocked[j] != 0.
AttentionMask key_mask(std::size_t queries, const std::vector<std::uint8_t>& key_blocked);
/// Prepends `columns` always-open key columns (memory slots) to a mask.
AttentionMask with_open_prefix(const AttentionMask& mask, std::size_t queries, std::size_t columns);

struct Linear {
  Tensor weight;  // [in × out]
  Tensor bias;    // [out], may be undefined

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                       const Rng& rng, bool with_bias = true);
  /// x is [n × in] or [in].
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gain, bias;
  static LayerNorm create(ParameterStore& store, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const;
};

struct MultiHeadAttention {
  std::size_t heads = 1;
  Linear query, key, value, out;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, std::size_t query_dim,
                                   std::size_t model_dim, std::size_t heads, const Rng& rng);
  /// q [Tq × query_dim], kv [Tk × model_dim]. If `weights` is given it receives one
  /// [Tq × Tk] probability matrix per head.
  Tensor operator()(const Tensor& q, const Tensor& kv, const AttentionMask& mask,
                    std::vector<Tensor>* weights = nullptr) const;
};

struct FeedForward {
  Linear in, out;
  static FeedForward create(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t hidden,
                            const Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

/// Pre-LN block: self-attention, optional cross-attention, feed-forward.
struct TransformerBlock {
  LayerNorm ln_self, ln_cross, ln_ff;
  MultiHeadAttention self_attn;
  std::optional<MultiHeadAttention> cross_attn;
  FeedForward ff;

  static TransformerBlock create(ParameterStore& store, const std::string& name, std::size_t dim,
                                 std::size_t heads, std::size_t hidden, bool with_cross, const Rng& rng);

  struct Context {
    const AttentionMask* self_mask = nullptr;
    /// Extra key/value rows prepended to the self-attention keys (memory slots).
    const Tensor* memory = nullptr;
    const Tensor* cross = nullptr;
    const AttentionMask* cross_mask = nullptr;
  };
  Tensor operator()(const Tensor& x, const Context& ctx) const;
};

/// Sinusoidal position table [positions × dim].
Tensor sinusoidal_positions(std::size_t positions, std::size_t dim);

}  // namespace todkat::nn
