#include "forec/model.hpp"

#include <stdexcept>

#include "forec/rng.hpp"

namespace forec::model {

namespace {

ad::Tensor normal_tensor(Rng& rng, std::vector<long> shape, double std_dev) {
  long n = 1;
  for (const long d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.normal(0.0, std_dev);
  return ad::Tensor(std::move(shape), std::move(v));
}

void check_tower(const ModelConfig& cfg) {
  if (cfg.tower.empty()) throw std::invalid_argument("model: tower must not be empty");
  if (cfg.tower.front() != 2 * cfg.embed_dim) {
    throw std::invalid_argument("model: tower input width must equal 2 * embed_dim");
  }
  for (const long w : cfg.tower) {
    if (w < 1) throw std::invalid_argument("model: tower widths must be positive");
  }
}

std::string layer_w(const std::string& prefix, long i) {
  return prefix + "layer" + std::to_string(i) + ".w";
}
std::string layer_b(const std::string& prefix, long i) {
  return prefix + "layer" + std::to_string(i) + ".b";
}

// Shared tower walk for MLP-style paths: hidden layers with ReLU.
ad::VarId mlp_tower(ad::Tape& tape, const ad::ParamSet& params, const std::string& prefix,
                    const ModelConfig& cfg, ad::VarId x) {
  const long depth = static_cast<long>(cfg.tower.size()) - 1;
  for (long i = 0; i < depth; ++i) {
    const ad::VarId w = tape.param(params, layer_w(prefix, i));
    const ad::VarId b = tape.param(params, layer_b(prefix, i));
    x = tape.relu(tape.add_rowwise(tape.matmul(x, w), b));
  }
  return x;
}

}  // namespace

std::string kind_name(Kind kind) {
  switch (kind) {
    case Kind::Gmf: return "gmf";
    case Kind::Mlp: return "mlp";
    case Kind::Nmf: return "nmf";
    case Kind::Forked: return "forked";
  }
  throw std::logic_error("kind_name: bad kind");
}

Kind kind_from_name(const std::string& name) {
  if (name == "gmf") return Kind::Gmf;
  if (name == "mlp") return Kind::Mlp;
  if (name == "nmf") return Kind::Nmf;
  if (name == "forked") return Kind::Forked;
  throw std::invalid_argument("unknown model kind: " + name);
}

Model make_gmf(long n_users, long n_items, const ModelConfig& cfg, std::uint64_t seed) {
  if (n_users < 1 || n_items < 1) throw std::invalid_argument("make_gmf: empty vocabulary");
  Model m;
  m.kind = Kind::Gmf;
  m.n_users = n_users;
  m.n_items = n_items;
  m.cfg = cfg;
  Rng rng(Rng::derive(seed, "init-gmf"));
  m.params.add("user_emb", normal_tensor(rng, {n_users, cfg.embed_dim}, cfg.init_std));
  m.params.add("item_emb", normal_tensor(rng, {n_items, cfg.embed_dim}, cfg.init_std));
  m.params.add("h", normal_tensor(rng, {cfg.embed_dim, 1}, cfg.init_std));
  return m;
}

Model make_mlp(long n_users, long n_items, const ModelConfig& cfg, std::uint64_t seed) {
  if (n_users < 1 || n_items < 1) throw std::invalid_argument("make_mlp: empty vocabulary");
  check_tower(cfg);
  Model m;
  m.kind = Kind::Mlp;
  m.n_users = n_users;
  m.n_items = n_items;
  m.cfg = cfg;
  Rng rng(Rng::derive(seed, "init-mlp"));
  m.params.add("user_emb", normal_tensor(rng, {n_users, cfg.embed_dim}, cfg.init_std));
  m.params.add("item_emb", normal_tensor(rng, {n_items, cfg.embed_dim}, cfg.init_std));
  for (long i = 0; i + 1 < static_cast<long>(cfg.tower.size()); ++i) {
    m.params.add(layer_w("", i),
                 normal_tensor(rng, {cfg.tower[static_cast<size_t>(i)], cfg.tower[static_cast<size_t>(i) + 1]}, cfg.init_std));
    m.params.add(layer_b("", i), ad::Tensor::zeros({cfg.tower[static_cast<size_t>(i) + 1]}));
  }
  m.params.add("out.w", normal_tensor(rng, {cfg.tower.back(), 1}, cfg.init_std));
  m.params.add("out.b", ad::Tensor::zeros({1}));
  return m;
}

Model make_nmf(const Model& gmf, const Model& mlp, double fusion_alpha) {
  if (gmf.kind != Kind::Gmf || mlp.kind != Kind::Mlp) {
    throw std::invalid_argument("make_nmf: expects a GMF and an MLP model");
  }
  if (gmf.n_users != mlp.n_users || gmf.n_items != mlp.n_items) {
    throw std::invalid_argument("make_nmf: vocabulary sizes disagree");
  }
  if (gmf.cfg.embed_dim != mlp.cfg.embed_dim) {
    throw std::invalid_argument("make_nmf: embedding widths disagree");
  }
  if (fusion_alpha < 0.0 || fusion_alpha > 1.0) {
    throw std::invalid_argument("make_nmf: fusion_alpha must lie in [0,1]");
  }
  Model m;
  m.kind = Kind::Nmf;
  m.n_users = gmf.n_users;
  m.n_items = gmf.n_items;
  m.cfg = mlp.cfg;
  m.cfg.fusion_alpha = fusion_alpha;

  m.params.add("gmf.user_emb", gmf.params.value("user_emb"));
  m.params.add("gmf.item_emb", gmf.params.value("item_emb"));
  // Kept from pre-training for the fork freeze set; the fused layer absorbs
  // its role in the forward pass.
  m.params.add("gmf.h", gmf.params.value("h"), /*frozen=*/true);
  m.params.add("mlp.user_emb", mlp.params.value("user_emb"));
  m.params.add("mlp.item_emb", mlp.params.value("item_emb"));
  for (long i = 0; i < mlp.mlp_depth(); ++i) {
    m.params.add(layer_w("mlp.", i), mlp.params.value(layer_w("", i)));
    m.params.add(layer_b("mlp.", i), mlp.params.value(layer_b("", i)));
  }

  const ad::Tensor& h = gmf.params.value("h");
  const ad::Tensor& wo = mlp.params.value("out.w");
  const long d = gmf.cfg.embed_dim;
  const long last = mlp.cfg.tower.back();
  std::vector<double> fused(static_cast<size_t>(d + last));
  for (long i = 0; i < d; ++i) fused[static_cast<size_t>(i)] = fusion_alpha * h[i];
  for (long i = 0; i < last; ++i) {
    fused[static_cast<size_t>(d + i)] = (1.0 - fusion_alpha) * wo[i];
  }
  m.params.add("fused.w", ad::Tensor({d + last, 1}, std::move(fused)));
  m.params.add("fused.b",
               ad::Tensor({1}, {(1.0 - fusion_alpha) * mlp.params.value("out.b")[0]}));
  return m;
}

Model fork(const Model& pretrained, long k_freeze, std::vector<long> head_widths,
           std::uint64_t seed) {
  if (pretrained.kind != Kind::Nmf) {
    throw std::invalid_argument("fork: expects a pre-trained NMF model");
  }
  const long depth = pretrained.mlp_depth();
  if (k_freeze < 1 || k_freeze > depth) {
    throw std::invalid_argument("fork: k_freeze must lie in [1, " + std::to_string(depth) + "]");
  }
  Model m;
  m.kind = Kind::Forked;
  m.n_users = pretrained.n_users;
  m.n_items = pretrained.n_items;
  m.cfg = pretrained.cfg;
  m.k_freeze = k_freeze;
  m.head_widths = head_widths;

  const ad::ParamSet& src = pretrained.params;
  m.params.add("gmf.user_emb", src.value("gmf.user_emb"), true);
  m.params.add("gmf.item_emb", src.value("gmf.item_emb"), true);
  m.params.add("gmf.h", src.value("gmf.h"), true);
  m.params.add("mlp.user_emb", src.value("mlp.user_emb"), true);
  m.params.add("mlp.item_emb", src.value("mlp.item_emb"), true);
  for (long i = 0; i < depth; ++i) {
    const bool frozen = i < k_freeze;
    m.params.add(layer_w("mlp.", i), src.value(layer_w("mlp.", i)), frozen);
    m.params.add(layer_b("mlp.", i), src.value(layer_b("mlp.", i)), frozen);
  }

  if (head_widths.empty()) {
    m.params.add("fused.w", src.value("fused.w"));
    m.params.add("fused.b", src.value("fused.b"));
    return m;
  }

  Rng rng(Rng::derive(seed, "init-head"));
  long in = m.fused_width();
  for (size_t i = 0; i < head_widths.size(); ++i) {
    const long out = head_widths[i];
    if (out < 1) throw std::invalid_argument("fork: head widths must be positive");
    m.params.add("head." + std::to_string(i) + ".w", normal_tensor(rng, {in, out}, m.cfg.init_std));
    m.params.add("head." + std::to_string(i) + ".b", ad::Tensor::zeros({out}));
    in = out;
  }
  m.params.add("head.out.w", normal_tensor(rng, {in, 1}, m.cfg.init_std));
  m.params.add("head.out.b", ad::Tensor::zeros({1}));
  return m;
}

ad::VarId Model::forward(ad::Tape& tape, std::span<const long> users,
                         std::span<const long> items) const {
  return forward_with(tape, params, users, items);
}

ad::VarId Model::forward_with(ad::Tape& tape, const ad::ParamSet& theta,
                              std::span<const long> users,
                              std::span<const long> items) const {
  if (users.size() != items.size()) {
    throw std::invalid_argument("Model::forward: users/items length mismatch");
  }
  if (users.empty()) throw std::invalid_argument("Model::forward: empty batch");
  for (const long u : users) {
    if (u < 0 || u >= n_users) {
      throw std::invalid_argument("Model::forward: user index out of range: " + std::to_string(u));
    }
  }
  for (const long i : items) {
    if (i < 0 || i >= n_items) {
      throw std::invalid_argument("Model::forward: item index out of range: " + std::to_string(i));
    }
  }
  std::vector<long> uv(users.begin(), users.end());
  std::vector<long> iv(items.begin(), items.end());

  switch (kind) {
    case Kind::Gmf: {
      const ad::VarId p = tape.rows(tape.param(theta, "user_emb"), uv);
      const ad::VarId q = tape.rows(tape.param(theta, "item_emb"), iv);
      const ad::VarId logit = tape.matmul(tape.mul(p, q), tape.param(theta, "h"));
      return tape.sigmoid(logit);
    }
    case Kind::Mlp: {
      const ad::VarId p = tape.rows(tape.param(theta, "user_emb"), uv);
      const ad::VarId q = tape.rows(tape.param(theta, "item_emb"), iv);
      ad::VarId x = tape.concat(p, q, 1);
      x = mlp_tower(tape, theta, "", cfg, x);
      const ad::VarId logit = tape.add_rowwise(tape.matmul(x, tape.param(theta, "out.w")),
                                               tape.param(theta, "out.b"));
      return tape.sigmoid(logit);
    }
    case Kind::Nmf:
    case Kind::Forked: {
      const ad::VarId gp = tape.rows(tape.param(theta, "gmf.user_emb"), uv);
      const ad::VarId gq = tape.rows(tape.param(theta, "gmf.item_emb"), iv);
      const ad::VarId gmf_vec = tape.mul(gp, gq);
      const ad::VarId mp = tape.rows(tape.param(theta, "mlp.user_emb"), uv);
      const ad::VarId mq = tape.rows(tape.param(theta, "mlp.item_emb"), iv);
      ad::VarId mlp_vec = tape.concat(mp, mq, 1);
      mlp_vec = mlp_tower(tape, theta, "mlp.", cfg, mlp_vec);
      ad::VarId x = tape.concat(gmf_vec, mlp_vec, 1);
      if (kind == Kind::Nmf || head_widths.empty()) {
        const ad::VarId logit = tape.add_rowwise(tape.matmul(x, tape.param(theta, "fused.w")),
                                                 tape.param(theta, "fused.b"));
        return tape.sigmoid(logit);
      }
      for (size_t i = 0; i < head_widths.size(); ++i) {
        const std::string p_w = "head." + std::to_string(i) + ".w";
        const std::string p_b = "head." + std::to_string(i) + ".b";
        x = tape.relu(tape.add_rowwise(tape.matmul(x, tape.param(theta, p_w)),
                                       tape.param(theta, p_b)));
      }
      const ad::VarId logit = tape.add_rowwise(tape.matmul(x, tape.param(theta, "head.out.w")),
                                               tape.param(theta, "head.out.b"));
      return tape.sigmoid(logit);
    }
  }
  throw std::logic_error("Model::forward: bad kind");
}

double Model::predict(long user, long item) const {
  ad::Tape tape;
  const long u[1] = {user};
  const long i[1] = {item};
  const ad::VarId out = forward(tape, u, i);
  return tape.value(out)[0];
}

std::vector<double> Model::score_items(long user, std::span<const long> items) const {
  if (items.empty()) return {};
  ad::Tape tape;
  std::vector<long> users(items.size(), user);
  const ad::VarId out = forward(tape, users, items);
  return tape.value(out).data();
}

}  // namespace forec::model
