#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forec/params.hpp"
#include "forec/tape.hpp"

namespace forec::model {

enum class Kind { Gmf, Mlp, Nmf, Forked };

std::string kind_name(Kind kind);
Kind kind_from_name(const std::string& name);

struct ModelConfig {
  long embed_dim = 8;
  // MLP widths: first entry is the concat input (2 * embed_dim), the last is
  // the representation the fusion layer consumes.
  std::vector<long> tower = {16, 64, 32, 16, 8};
  double fusion_alpha = 0.5;
  double init_std = 0.01;
};

// One recommender. The four architectures share parameter plumbing, so they
// live in a single struct switched on `kind`; construction goes through the
// factory functions below.
struct Model {
  Kind kind = Kind::Gmf;
  long n_users = 0;
  long n_items = 0;
  ModelConfig cfg;
  long k_freeze = 0;              // forked models: frozen MLP layer count
  std::vector<long> head_widths;  // forked models: empty keeps the fused layer
  ad::ParamSet params;

  long mlp_depth() const { return static_cast<long>(cfg.tower.size()) - 1; }
  long fused_width() const { return cfg.embed_dim + cfg.tower.back(); }

  // Predicted interaction probabilities for a batch of (user, item) pairs,
  // recorded on `tape`. Spans must have equal length.
  ad::VarId forward(ad::Tape& tape, std::span<const long> users,
                    std::span<const long> items) const;

  // Same architecture, explicit parameters. Lets meta-learning evaluate the
  // network at adapted parameter values without touching the model.
  ad::VarId forward_with(ad::Tape& tape, const ad::ParamSet& theta,
                         std::span<const long> users, std::span<const long> items) const;

  double predict(long user, long item) const;
  std::vector<double> score_items(long user, std::span<const long> items) const;
};

Model make_gmf(long n_users, long n_items, const ModelConfig& cfg, std::uint64_t seed);
Model make_mlp(long n_users, long n_items, const ModelConfig& cfg, std::uint64_t seed);

// Fuses pre-trained GMF and MLP models: embeddings and tower weights are
// copied (no sharing), the fusion layer is [alpha * h | (1-alpha) * out.w]
// with bias (1-alpha) * out.b, so at init the fused logit interpolates the
// two pre-trained logits.
Model make_nmf(const Model& gmf, const Model& mlp, double fusion_alpha);

// Market-specific fork: freezes both embedding tables of both sub-networks,
// the GMF output weights, and MLP layers 1..k_freeze; the remaining MLP
// layers stay trainable copies. A non-empty head replaces the fused output
// layer with a freshly initialized ReLU tower over the 16-wide GMF|MLP
// concatenation, ending in a scalar sigmoid output.
Model fork(const Model& pretrained, long k_freeze, std::vector<long> head_widths,
           std::uint64_t seed);

}  // namespace forec::model
