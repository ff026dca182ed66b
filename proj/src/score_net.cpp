#include "kldiff/score_net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "kldiff/io.hpp"
#include "kldiff/torus.hpp"

namespace kldiff {

namespace {

constexpr double kLnEps = 1e-5;
constexpr char kMagic[8] = {'K', 'L', 'D', 'C', 'K', 'P', 'T', '1'};

using Mat = RowMatrix;
using RowVec = Eigen::RowVectorXd;

struct Slot {
  long off = 0;
  int rows = 0;
  int cols = 1;
};

struct LayerSlots {
  Slot ln_g, ln_b;
  Slot e_wi, e_wj, e_wv, e_wl, e_wf, e_b1, e_w2, e_b2;
  Slot n_w1, n_b1, n_w2, n_b2;
};

struct Layout {
  Slot in_w, in_b;
  std::vector<LayerSlots> layers;
  Slot lnf_g, lnf_b;
  Slot hv_w1, hv_b1, hv_w2, hv_b2;
  Slot hl_w, hl_b;
  Slot ha_w, ha_b;
  std::vector<TensorShape> shapes;
  long total = 0;

  Slot add(const std::string& name, int rows, int cols = 1) {
    Slot s{total, rows, cols};
    shapes.push_back({name, rows, cols});
    total += static_cast<long>(rows) * cols;
    return s;
  }
};

Layout make_layout(const NetConfig& cfg) {
  const int h = cfg.hidden_dim;
  const int c = cfg.type_channels;
  Layout L;
  L.in_w = L.add("input.weight", h, c + cfg.time_embed_dim);
  L.in_b = L.add("input.bias", h);
  for (int k = 0; k < cfg.n_layers; ++k) {
    const std::string p = "layer" + std::to_string(k) + ".";
    LayerSlots s;
    if (cfg.layer_norm) {
      s.ln_g = L.add(p + "norm.gain", h);
      s.ln_b = L.add(p + "norm.bias", h);
    }
    s.e_wi = L.add(p + "edge.w_recv", h, h);
    s.e_wj = L.add(p + "edge.w_send", h, h);
    s.e_wv = L.add(p + "edge.w_vel", h, 6);
    s.e_wl = L.add(p + "edge.w_lattice", h, 6);
    s.e_wf = L.add(p + "edge.w_frac", h, 6 * cfg.n_freq);
    s.e_b1 = L.add(p + "edge.bias1", h);
    s.e_w2 = L.add(p + "edge.weight2", h, h);
    s.e_b2 = L.add(p + "edge.bias2", h);
    s.n_w1 = L.add(p + "node.weight1", h, 2 * h);
    s.n_b1 = L.add(p + "node.bias1", h);
    s.n_w2 = L.add(p + "node.weight2", h, h);
    s.n_b2 = L.add(p + "node.bias2", h);
    L.layers.push_back(s);
  }
  if (cfg.layer_norm) {
    L.lnf_g = L.add("final_norm.gain", h);
    L.lnf_b = L.add("final_norm.bias", h);
  }
  L.hv_w1 = L.add("head_v.weight1", h, h);
  L.hv_b1 = L.add("head_v.bias1", h);
  L.hv_w2 = L.add("head_v.weight2", 3, h);
  L.hv_b2 = L.add("head_v.bias2", 3);
  L.hl_w = L.add("head_l.weight", 6, h);
  L.hl_b = L.add("head_l.bias", 6);
  L.ha_w = L.add("head_a.weight", c, h);
  L.ha_b = L.add("head_a.bias", c);
  return L;
}

// Weights are stored column-major as (out x in).
Eigen::Map<const Eigen::MatrixXd> wmap(const Vector& p, Slot s) {
  return {p.data() + s.off, s.rows, s.cols};
}
Eigen::Map<Eigen::MatrixXd> wmap(Vector& p, Slot s) { return {p.data() + s.off, s.rows, s.cols}; }
Eigen::Map<const RowVec> bmap(const Vector& p, Slot s) { return {p.data() + s.off, s.rows}; }
Eigen::Map<RowVec> bmap(Vector& p, Slot s) { return {p.data() + s.off, s.rows}; }

Mat silu(const Mat& z) { return (z.array() / (1.0 + (-z.array()).exp())).matrix(); }

// dz = dy * silu'(z), in place on dy.
void silu_backward(const Mat& z, Mat& dy) {
  const auto s = 1.0 / (1.0 + (-z.array()).exp());
  dy.array() *= s * (1.0 + z.array() * (1.0 - s));
}

Mat linear(const Mat& x, const Vector& p, Slot w, Slot b) {
  Mat y = x * wmap(p, w).transpose();
  y.rowwise() += bmap(p, b);
  return y;
}

// Accumulates weight/bias gradients and returns dx.
Mat linear_backward(const Mat& x, const Mat& dy, const Vector& p, Vector& g, Slot w, Slot b) {
  wmap(g, w).noalias() += dy.transpose() * x;
  bmap(g, b) += dy.colwise().sum();
  return dy * wmap(p, w);
}

void linear_backward_no_dx(const Mat& x, const Mat& dy, Vector& g, Slot w, Slot b) {
  wmap(g, w).noalias() += dy.transpose() * x;
  bmap(g, b) += dy.colwise().sum();
}

struct NormCache {
  Mat xhat;
  Vector inv_std;
};

Mat layer_norm(const Mat& x, const Vector& p, Slot gain, Slot bias, NormCache& c) {
  const Eigen::Index n = x.rows();
  const double h = static_cast<double>(x.cols());
  c.xhat.resize(n, x.cols());
  c.inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).sum() / h;
    const double var = (x.row(i).array() - mu).square().sum() / h;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    c.inv_std[i] = inv;
    c.xhat.row(i) = (x.row(i).array() - mu) * inv;
  }
  Mat y = c.xhat.array().rowwise() * bmap(p, gain).array();
  y.rowwise() += bmap(p, bias);
  return y;
}

Mat layer_norm_backward(const Mat& dy, const Vector& p, Vector& g, Slot gain, Slot bias, const NormCache& c) {
  bmap(g, gain) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  bmap(g, bias) += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * bmap(p, gain).array();
  const double h = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).sum() / h;
    const double m2 = dxhat.row(i).dot(c.xhat.row(i)) / h;
    dx.row(i) = c.inv_std[i] * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
  }
  return dx;
}

struct Topology {
  std::vector<int> offset;      // first node of each graph
  std::vector<int> node_graph;  // graph of each node
  std::vector<int> recv, send, edge_graph;
};

Topology make_topology(const std::vector<int>& sizes) {
  Topology t;
  int o = 0;
  for (int g = 0; g < static_cast<int>(sizes.size()); ++g) {
    t.offset.push_back(o);
    const int k = sizes[g];
    for (int i = 0; i < k; ++i) {
      t.node_graph.push_back(g);
      for (int j = 0; j < k; ++j) {
        if (i == j) continue;
        t.recv.push_back(o + i);
        t.send.push_back(o + j);
        t.edge_graph.push_back(g);
      }
    }
    o += k;
  }
  return t;
}

struct LayerCache {
  NormCache norm;
  Mat hn;
  Mat z1, a1, z2;
  Mat u, y1, b1;
};

struct Cache {
  Topology topo;
  Mat x0;
  Mat ef;  // E x 6 n_freq
  Mat ev;  // E x 6
  Mat lat;  // B x 6
  std::vector<LayerCache> layers;
  NormCache final_norm;
  Mat hf;
  Mat v1, sv;
  Mat pooled;
  NetOutput out;
};

void project_per_graph(AtomArray& x, const Topology& t, const std::vector<int>& sizes) {
  for (size_t g = 0; g < sizes.size(); ++g) {
    const int k = sizes[g];
    if (k == 0) continue;
    auto blk = x.middleRows(t.offset[g], k);
    const Eigen::RowVector3d mean = blk.colwise().mean();
    blk.rowwise() -= mean;
  }
}

void run_forward(const GraphBatch& batch, const Vector& p, const Layout& L, const NetConfig& cfg, Cache& c) {
  const int h = cfg.hidden_dim;
  const int nf = cfg.n_freq;
  c.topo = make_topology(batch.sizes);
  const Topology& t = c.topo;
  const auto n = static_cast<Eigen::Index>(t.node_graph.size());
  const auto e = static_cast<Eigen::Index>(t.recv.size());
  const int b = batch.num_graphs();

  c.x0.resize(n, cfg.type_channels + cfg.time_embed_dim);
  std::vector<Vector> temb(static_cast<size_t>(b));
  for (int g = 0; g < b; ++g) temb[g] = time_embed(batch.u[g], cfg.time_embed_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    c.x0.row(i).head(cfg.type_channels) = batch.a.row(i);
    c.x0.row(i).tail(cfg.time_embed_dim) = temb[t.node_graph[i]].transpose();
  }

  c.ef.resize(e, 6 * nf);
  c.ev.resize(e, 6);
  for (Eigen::Index k = 0; k < e; ++k) {
    const int i = t.recv[k];
    const int j = t.send[k];
    for (int d = 0; d < 3; ++d) {
      const double delta = batch.f(j, d) - batch.f(i, d);
      for (int q = 1; q <= nf; ++q) {
        const double arg = kTwoPi * q * delta;
        c.ef(k, d * 2 * nf + 2 * (q - 1)) = std::sin(arg);
        c.ef(k, d * 2 * nf + 2 * (q - 1) + 1) = std::cos(arg);
      }
      c.ev(k, d) = batch.v(i, d);
      c.ev(k, 3 + d) = batch.v(j, d);
    }
  }
  c.lat = batch.l;

  Mat hcur = linear(c.x0, p, L.in_w, L.in_b);
  c.layers.assign(static_cast<size_t>(cfg.n_layers), {});
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    const LayerSlots& s = L.layers[layer];
    LayerCache& lc = c.layers[layer];
    lc.hn = cfg.layer_norm ? layer_norm(hcur, p, s.ln_g, s.ln_b, lc.norm) : hcur;

    const Mat pr = lc.hn * wmap(p, s.e_wi).transpose();
    const Mat ps = lc.hn * wmap(p, s.e_wj).transpose();
    const Mat pl = c.lat * wmap(p, s.e_wl).transpose();
    lc.z1 = c.ef * wmap(p, s.e_wf).transpose();
    lc.z1.noalias() += c.ev * wmap(p, s.e_wv).transpose();
    const auto b1 = bmap(p, s.e_b1);
    for (Eigen::Index k = 0; k < e; ++k)
      lc.z1.row(k) += pr.row(t.recv[k]) + ps.row(t.send[k]) + pl.row(t.edge_graph[k]) + b1;
    lc.a1 = silu(lc.z1);
    lc.z2 = linear(lc.a1, p, s.e_w2, s.e_b2);
    const Mat msg = silu(lc.z2);

    lc.u.resize(n, 2 * h);
    lc.u.leftCols(h) = lc.hn;
    lc.u.rightCols(h).setZero();
    for (Eigen::Index k = 0; k < e; ++k) lc.u.row(t.recv[k]).tail(h) += msg.row(k);

    lc.y1 = linear(lc.u, p, s.n_w1, s.n_b1);
    lc.b1 = silu(lc.y1);
    hcur += linear(lc.b1, p, s.n_w2, s.n_b2);
  }

  c.hf = cfg.layer_norm ? layer_norm(hcur, p, L.lnf_g, L.lnf_b, c.final_norm) : hcur;

  c.v1 = linear(c.hf, p, L.hv_w1, L.hv_b1);
  c.sv = silu(c.v1);
  const Mat ov = linear(c.sv, p, L.hv_w2, L.hv_b2);
  c.out.out_v = ov;
  project_per_graph(c.out.out_v, t, batch.sizes);

  c.pooled = Mat::Zero(b, h);
  for (int g = 0; g < b; ++g) {
    const int k = batch.sizes[g];
    if (k > 0) c.pooled.row(g) = c.hf.middleRows(t.offset[g], k).colwise().mean();
  }
  c.out.out_l = linear(c.pooled, p, L.hl_w, L.hl_b);
  c.out.out_a = linear(c.hf, p, L.ha_w, L.ha_b);
}

// Reverse pass; d_out_v is with respect to the projected velocity head.
Vector run_backward(const GraphBatch& batch, const Vector& p, const Layout& L, const NetConfig& cfg,
                    const Cache& c, const AtomArray& d_out_v, const Mat& d_out_l, const Mat* d_out_a) {
  const int h = cfg.hidden_dim;
  const Topology& t = c.topo;
  const auto n = static_cast<Eigen::Index>(t.node_graph.size());
  const auto e = static_cast<Eigen::Index>(t.recv.size());
  Vector g = Vector::Zero(L.total);

  AtomArray dv_raw = d_out_v;
  project_per_graph(dv_raw, t, batch.sizes);
  const Mat dov = dv_raw;
  Mat dsv = linear_backward(c.sv, dov, p, g, L.hv_w2, L.hv_b2);
  silu_backward(c.v1, dsv);
  Mat dhf = linear_backward(c.hf, dsv, p, g, L.hv_w1, L.hv_b1);

  const Mat dpooled = linear_backward(c.pooled, d_out_l, p, g, L.hl_w, L.hl_b);
  for (int gi = 0; gi < batch.num_graphs(); ++gi) {
    const int k = batch.sizes[gi];
    if (k == 0) continue;
    dhf.middleRows(t.offset[gi], k).rowwise() += dpooled.row(gi) / static_cast<double>(k);
  }
  if (d_out_a != nullptr) dhf += linear_backward(c.hf, *d_out_a, p, g, L.ha_w, L.ha_b);

  Mat dh = cfg.layer_norm ? layer_norm_backward(dhf, p, g, L.lnf_g, L.lnf_b, c.final_norm) : dhf;

  for (int layer = cfg.n_layers - 1; layer >= 0; --layer) {
    const LayerSlots& s = L.layers[layer];
    const LayerCache& lc = c.layers[layer];

    Mat db1 = linear_backward(lc.b1, dh, p, g, s.n_w2, s.n_b2);
    silu_backward(lc.y1, db1);
    const Mat du = linear_backward(lc.u, db1, p, g, s.n_w1, s.n_b1);
    Mat dhn = du.leftCols(h);

    Mat dz2(e, h);
    for (Eigen::Index k = 0; k < e; ++k) dz2.row(k) = du.row(t.recv[k]).tail(h);
    silu_backward(lc.z2, dz2);
    Mat dz1 = linear_backward(lc.a1, dz2, p, g, s.e_w2, s.e_b2);
    silu_backward(lc.z1, dz1);

    wmap(g, s.e_wf).noalias() += dz1.transpose() * c.ef;
    wmap(g, s.e_wv).noalias() += dz1.transpose() * c.ev;
    bmap(g, s.e_b1) += dz1.colwise().sum();
    Mat dpr = Mat::Zero(n, h);
    Mat dps = Mat::Zero(n, h);
    Mat dpl = Mat::Zero(batch.num_graphs(), h);
    for (Eigen::Index k = 0; k < e; ++k) {
      dpr.row(t.recv[k]) += dz1.row(k);
      dps.row(t.send[k]) += dz1.row(k);
      dpl.row(t.edge_graph[k]) += dz1.row(k);
    }
    wmap(g, s.e_wl).noalias() += dpl.transpose() * c.lat;
    wmap(g, s.e_wi).noalias() += dpr.transpose() * lc.hn;
    wmap(g, s.e_wj).noalias() += dps.transpose() * lc.hn;
    dhn.noalias() += dpr * wmap(p, s.e_wi);
    dhn.noalias() += dps * wmap(p, s.e_wj);

    if (cfg.layer_norm)
      dh += layer_norm_backward(dhn, p, g, s.ln_g, s.ln_b, lc.norm);
    else
      dh += dhn;
  }

  linear_backward_no_dx(c.x0, dh, g, L.in_w, L.in_b);
  return g;
}

void check_params(const ScoreNetParams& params, const Layout& L) {
  if (params.values.size() != L.total)
    throw std::invalid_argument("score network: parameter vector does not match the configuration");
}

struct Residuals {
  LossBreakdown loss;
  AtomArray d_out_v;
  Mat d_out_l;
  Mat d_out_a;
};

Residuals residuals(const GraphBatch& batch, const LossTargets& tg, const NetOutput& out, const Topology& t,
                    bool want_grad) {
  const int b = batch.num_graphs();
  if (tg.target_v.rows() != batch.f.rows() || tg.head_scale.size() != b || tg.inv_sigma2_v.size() != b ||
      tg.weight_v.size() != b || tg.target_l.rows() != b || tg.target_l.cols() != 6)
    throw std::invalid_argument("loss: target shapes do not match the batch");
  const bool use_a = tg.weight_a != 0.0;
  if (use_a && (tg.target_a.rows() != out.out_a.rows() || tg.target_a.cols() != out.out_a.cols()))
    throw std::invalid_argument("loss: type target shape mismatch");

  Residuals r;
  const AtomArray s = assemble_velocity_score(out.out_v, batch, tg.head_scale, tg.inv_sigma2_v);
  const AtomArray rv = s - tg.target_v;
  if (want_grad) r.d_out_v.resize(rv.rows(), 3);
  for (int g = 0; g < b; ++g) {
    const int k = batch.sizes[g];
    const auto blk = rv.middleRows(t.offset[g], k);
    r.loss.v += tg.weight_v[g] * blk.squaredNorm();
    if (want_grad) {
      r.d_out_v.middleRows(t.offset[g], k) = 2.0 * tg.weight_v[g] * tg.head_scale[g] * blk;
    }
  }
  const Mat rl = out.out_l - tg.target_l;
  r.loss.l = tg.weight_l * rl.squaredNorm();
  if (want_grad) r.d_out_l = 2.0 * tg.weight_l * rl;
  if (use_a) {
    const Mat ra = out.out_a - tg.target_a;
    r.loss.a = tg.weight_a * ra.squaredNorm();
    if (want_grad) r.d_out_a = 2.0 * tg.weight_a * ra;
  }
  r.loss.total = r.loss.v + r.loss.l + r.loss.a;
  return r;
}

}  // namespace

void NetConfig::validate() const {
  if (n_layers < 0) throw ConfigError("net.n_layers must be >= 0");
  if (hidden_dim < 1) throw ConfigError("net.hidden_dim must be >= 1");
  if (n_freq < 1) throw ConfigError("net.n_freq must be >= 1");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw ConfigError("net.time_embed_dim must be even and >= 2");
  if (type_channels < 1) throw ConfigError("net.type_channels must be >= 1");
  if (activation != "silu") throw ConfigError("net.activation: only \"silu\" is supported");
}

nlohmann::ordered_json NetConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_layers"] = n_layers;
  j["hidden_dim"] = hidden_dim;
  j["time_embed_dim"] = time_embed_dim;
  j["n_freq"] = n_freq;
  j["type_channels"] = type_channels;
  j["layer_norm"] = layer_norm;
  j["activation"] = activation;
  return j;
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
  NetConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.time_embed_dim = j.at("time_embed_dim").get<int>();
  c.n_freq = j.at("n_freq").get<int>();
  c.type_channels = j.at("type_channels").get<int>();
  c.layer_norm = j.at("layer_norm").get<bool>();
  c.activation = j.at("activation").get<std::string>();
  c.validate();
  return c;
}

std::vector<TensorShape> param_shapes(const NetConfig& cfg) { return make_layout(cfg).shapes; }

ScoreNetParams zero_params(const NetConfig& cfg) {
  cfg.validate();
  Layout L = make_layout(cfg);
  return {L.shapes, Vector::Zero(L.total)};
}

ScoreNetParams init_params(const NetConfig& cfg, Rng& rng) {
  ScoreNetParams p = zero_params(cfg);
  long off = 0;
  for (const auto& s : p.shapes) {
    const bool is_gain = s.name.ends_with(".gain");
    if (is_gain) {
      p.values.segment(off, s.size()).setOnes();
    } else if (s.cols > 1) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (long k = 0; k < s.size(); ++k) p.values[off + k] = u(rng);
    }
    off += s.size();
  }
  return p;
}

Vector sinusoidal_embed(double x, int n_freq) {
  Vector out(2 * n_freq);
  for (int q = 1; q <= n_freq; ++q) {
    const double arg = kTwoPi * q * x;
    out[2 * (q - 1)] = std::sin(arg);
    out[2 * (q - 1) + 1] = std::cos(arg);
  }
  return out;
}

Vector time_embed(double u, int dim) {
  const int half = dim / 2;
  Vector out(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(1000.0, -static_cast<double>(i) / half);
    const double arg = 1000.0 * u * freq;
    out[i] = std::sin(arg);
    out[half + i] = std::cos(arg);
  }
  return out;
}

void GraphBatch::check(const NetConfig& cfg) const {
  long n = 0;
  for (int k : sizes) {
    if (k < 1) throw std::invalid_argument("GraphBatch: every graph needs at least one atom");
    n += k;
  }
  const auto b = static_cast<Eigen::Index>(sizes.size());
  if (f.rows() != n || v.rows() != n || a.rows() != n || a.cols() != cfg.type_channels || l.rows() != b ||
      l.cols() != 6 || u.size() != b)
    throw std::invalid_argument("GraphBatch: array shapes do not match sizes/config");
}

NetOutput forward(const GraphBatch& batch, const ScoreNetParams& params, const NetConfig& cfg) {
  batch.check(cfg);
  const Layout L = make_layout(cfg);
  check_params(params, L);
  Cache c;
  run_forward(batch, params.values, L, cfg, c);
  return std::move(c.out);
}

AtomArray assemble_velocity_score(const AtomArray& out_v, const GraphBatch& batch, const Vector& head_scale,
                                  const Vector& inv_sigma2_v) {
  AtomArray s(out_v.rows(), 3);
  Eigen::Index o = 0;
  for (int g = 0; g < batch.num_graphs(); ++g) {
    const int k = batch.sizes[g];
    s.middleRows(o, k) = head_scale[g] * out_v.middleRows(o, k) - inv_sigma2_v[g] * batch.v.middleRows(o, k);
    o += k;
  }
  return s;
}

LossGrad loss_gradients(const GraphBatch& batch, const LossTargets& targets, const ScoreNetParams& params,
                        const NetConfig& cfg) {
  batch.check(cfg);
  const Layout L = make_layout(cfg);
  check_params(params, L);
  Cache c;
  run_forward(batch, params.values, L, cfg, c);
  Residuals r = residuals(batch, targets, c.out, c.topo, true);
  if (!std::isfinite(r.loss.total)) throw std::runtime_error("score network: non-finite loss");
  LossGrad out;
  out.loss = r.loss;
  out.grad = run_backward(batch, params.values, L, cfg, c, r.d_out_v, r.d_out_l,
                          targets.weight_a != 0.0 ? &r.d_out_a : nullptr);
  return out;
}

LossBreakdown loss_value(const GraphBatch& batch, const LossTargets& targets, const ScoreNetParams& params,
                         const NetConfig& cfg) {
  batch.check(cfg);
  const Layout L = make_layout(cfg);
  check_params(params, L);
  Cache c;
  run_forward(batch, params.values, L, cfg, c);
  return residuals(batch, targets, c.out, c.topo, false).loss;
}

namespace {

void put_u64(std::string& s, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view s, size_t at) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return x;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::ordered_json header;
  header["format"] = "kldiff-checkpoint";
  header["version"] = 1;
  header["net"] = ckpt.net.to_json();
  nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
  for (const auto& s : ckpt.params.shapes) shapes.push_back({s.name, s.rows, s.cols});
  header["shapes"] = shapes;
  header["n_params"] = ckpt.params.values.size();
  header["meta"] = ckpt.meta;
  const std::string hs = header.dump();

  std::string bytes(kMagic, sizeof kMagic);
  put_u64(bytes, hs.size());
  bytes += hs;
  for (Eigen::Index i = 0; i < ckpt.params.values.size(); ++i)
    put_u64(bytes, std::bit_cast<std::uint64_t>(ckpt.params.values[i]));
  put_u64(bytes, crc64(bytes));
  write_file_atomic(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto fail = [&](const std::string& why) {
    return std::runtime_error("checkpoint " + path.string() + ": " + why);
  };
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw fail("bad magic");
  const std::uint64_t stored = get_u64(bytes, bytes.size() - 8);
  if (crc64(std::string_view(bytes).substr(0, bytes.size() - 8)) != stored) throw fail("checksum mismatch");
  const std::uint64_t hlen = get_u64(bytes, 8);
  if (16 + hlen + 8 > bytes.size()) throw fail("truncated header");
  const auto header = nlohmann::json::parse(bytes.substr(16, hlen));

  Checkpoint ck;
  ck.net = NetConfig::from_json(header.at("net"));
  ck.meta = header.at("meta");
  const Layout L = make_layout(ck.net);
  const auto& shapes = header.at("shapes");
  if (shapes.size() != L.shapes.size()) throw fail("shape table does not match the network config");
  for (size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    if (s.at(0).get<std::string>() != L.shapes[i].name || s.at(1).get<int>() != L.shapes[i].rows ||
        s.at(2).get<int>() != L.shapes[i].cols)
      throw fail("shape table entry " + std::to_string(i) + " does not match");
  }
  const auto n = header.at("n_params").get<long>();
  if (n != L.total) throw fail("parameter count mismatch");
  const size_t payload = 16 + hlen;
  if (payload + 8 * static_cast<size_t>(n) + 8 != bytes.size()) throw fail("payload size mismatch");
  ck.params.shapes = L.shapes;
  ck.params.values.resize(n);
  for (long i = 0; i < n; ++i) ck.params.values[i] = std::bit_cast<double>(get_u64(bytes, payload + 8 * i));
  if (!ck.params.values.allFinite()) throw fail("non-finite parameters");
  return ck;
}

}  // namespace kldiff
