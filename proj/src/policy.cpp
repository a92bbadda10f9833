#include "psnlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "psnlab/errors.hpp"
#include "psnlab/rng.hpp"

namespace psnlab {

namespace {

constexpr double kRmsEps = 1e-8;
constexpr char kCheckpointMagic[9] = "PSNCKPT1";

}  // namespace

void PolicyConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (context_len < 4) throw ConfigError("context_len must be >= 4");
  if (d_model < 2) throw ConfigError("d_model must be >= 2");
  if (n_blocks < 0) throw ConfigError("n_blocks must be >= 0");
  if (d_mlp < 1) throw ConfigError("d_mlp must be >= 1");
}

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Embed: return "embed";
    case ParamGroup::Attn: return "attn";
    case ParamGroup::Mlp: return "mlp";
    case ParamGroup::Norm: return "norm";
    case ParamGroup::Head: return "head";
  }
  throw ConfigError("unknown parameter group");
}

ParamGroup group_from_name(const std::string& name) {
  for (ParamGroup g : kGroupOrder) {
    if (name == group_name(g)) return g;
  }
  throw ConfigError("unknown parameter group: " + name);
}

std::array<std::size_t, kNumGroups> group_sizes(const PolicyConfig& cfg) {
  const std::size_t V = cfg.vocab_size, L = cfg.context_len, D = cfg.d_model;
  const std::size_t B = cfg.n_blocks, H = cfg.d_mlp;
  std::array<std::size_t, kNumGroups> s{};
  s[static_cast<int>(ParamGroup::Embed)] = V * D + L * D;
  s[static_cast<int>(ParamGroup::Attn)] = B * 4 * D * D;
  s[static_cast<int>(ParamGroup::Mlp)] = B * (D * H + H + H * D + D);
  s[static_cast<int>(ParamGroup::Norm)] = B * 2 * D + D;
  s[static_cast<int>(ParamGroup::Head)] = D * V + V;
  return s;
}

std::size_t ParameterSet::total_dim() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& g : groups) {
    for (double x : g) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> out;
  out.reserve(total_dim());
  for (ParamGroup g : kGroupOrder) {
    const auto& v = group(g);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

ParameterSet ParameterSet::unflatten(const PolicyConfig& cfg, const std::vector<double>& flat) {
  cfg.validate();
  ParameterSet p = zeros_like(cfg);
  if (flat.size() != p.total_dim()) throw InputError("flat vector size mismatch");
  std::size_t off = 0;
  for (ParamGroup g : kGroupOrder) {
    auto& v = p.group(g);
    std::copy(flat.begin() + off, flat.begin() + off + v.size(), v.begin());
    off += v.size();
  }
  return p;
}

ParameterSet ParameterSet::zeros_like(const PolicyConfig& cfg) {
  cfg.validate();
  ParameterSet p;
  p.config = cfg;
  const auto sizes = group_sizes(cfg);
  for (int i = 0; i < kNumGroups; ++i) p.groups[i].assign(sizes[i], 0.0);
  return p;
}

// ---------------------------------------------------------------------------
// Layout within groups. All matrices row-major with y_i = sum_j W[i*cols+j] x_j.
//   embed: tokE[V*D], posE[L*D]
//   attn, per block: Wq, Wk, Wv, Wo, each D*D
//   mlp, per block: W1[H*D], b1[H], W2[D*H], b2[D]
//   norm: per block g1[D], g2[D]; then final gf[D]
//   head: Wh[V*D], bh[V]
// ---------------------------------------------------------------------------

namespace {

struct Views {
  int V, L, D, B, H;
  const double *tokE, *posE, *gf, *Wh, *bh;
  const double* attn;  // base of attn group
  const double* mlp;   // base of mlp group
  const double* norm;  // base of norm group

  explicit Views(const ParameterSet& p) {
    const auto& c = p.config;
    V = c.vocab_size;
    L = c.context_len;
    D = c.d_model;
    B = c.n_blocks;
    H = c.d_mlp;
    const auto& embed = p.group(ParamGroup::Embed);
    tokE = embed.data();
    posE = embed.data() + static_cast<std::size_t>(V) * D;
    attn = p.group(ParamGroup::Attn).data();
    mlp = p.group(ParamGroup::Mlp).data();
    norm = p.group(ParamGroup::Norm).data();
    gf = norm + static_cast<std::size_t>(B) * 2 * D;
    const auto& head = p.group(ParamGroup::Head);
    Wh = head.data();
    bh = head.data() + static_cast<std::size_t>(V) * D;
  }

  const double* Wq(int b) const { return attn + static_cast<std::size_t>(b) * 4 * D * D; }
  const double* Wk(int b) const { return Wq(b) + static_cast<std::size_t>(D) * D; }
  const double* Wv(int b) const { return Wk(b) + static_cast<std::size_t>(D) * D; }
  const double* Wo(int b) const { return Wv(b) + static_cast<std::size_t>(D) * D; }

  std::size_t mlp_block_size() const {
    return static_cast<std::size_t>(D) * H + H + static_cast<std::size_t>(H) * D + D;
  }
  const double* W1(int b) const { return mlp + b * mlp_block_size(); }
  const double* b1(int b) const { return W1(b) + static_cast<std::size_t>(H) * D; }
  const double* W2(int b) const { return b1(b) + H; }
  const double* b2(int b) const { return W2(b) + static_cast<std::size_t>(D) * H; }

  const double* g1(int b) const { return norm + static_cast<std::size_t>(b) * 2 * D; }
  const double* g2(int b) const { return g1(b) + D; }
};

// Mutable mirror of Views for gradient accumulation.
struct GradViews {
  int V, L, D, B, H;
  double *tokE, *posE, *gf, *Wh, *bh, *attn, *mlp, *norm;

  explicit GradViews(GradientSet& g) {
    const auto& c = g.config;
    V = c.vocab_size;
    L = c.context_len;
    D = c.d_model;
    B = c.n_blocks;
    H = c.d_mlp;
    auto& embed = g.group(ParamGroup::Embed);
    tokE = embed.data();
    posE = embed.data() + static_cast<std::size_t>(V) * D;
    attn = g.group(ParamGroup::Attn).data();
    mlp = g.group(ParamGroup::Mlp).data();
    norm = g.group(ParamGroup::Norm).data();
    gf = norm + static_cast<std::size_t>(B) * 2 * D;
    auto& head = g.group(ParamGroup::Head);
    Wh = head.data();
    bh = head.data() + static_cast<std::size_t>(V) * D;
  }

  double* Wq(int b) const { return attn + static_cast<std::size_t>(b) * 4 * D * D; }
  double* Wk(int b) const { return Wq(b) + static_cast<std::size_t>(D) * D; }
  double* Wv(int b) const { return Wk(b) + static_cast<std::size_t>(D) * D; }
  double* Wo(int b) const { return Wv(b) + static_cast<std::size_t>(D) * D; }

  std::size_t mlp_block_size() const {
    return static_cast<std::size_t>(D) * H + H + static_cast<std::size_t>(H) * D + D;
  }
  double* W1(int b) const { return mlp + b * mlp_block_size(); }
  double* b1(int b) const { return W1(b) + static_cast<std::size_t>(H) * D; }
  double* W2(int b) const { return b1(b) + H; }
  double* b2(int b) const { return W2(b) + static_cast<std::size_t>(D) * H; }

  double* g1(int b) const { return norm + static_cast<std::size_t>(b) * 2 * D; }
  double* g2(int b) const { return g1(b) + D; }
};

struct BlockCache {
  std::vector<double> x_in;   // T*D, residual stream entering the block
  std::vector<double> n1;     // T*D
  std::vector<double> rms1;   // T
  std::vector<double> q, k, v, z;  // T*D
  std::vector<double> att;    // T*T, row t holds weights over s <= t
  std::vector<double> x_mid;  // T*D, after attention residual
  std::vector<double> n2;     // T*D
  std::vector<double> rms2;   // T
  std::vector<double> h;      // T*H, post-tanh hidden
};

struct Cache {
  int T = 0;
  std::vector<BlockCache> blocks;
  std::vector<double> x_out;  // T*D
  std::vector<double> nf;     // T*D
  std::vector<double> rmsf;   // T
  std::vector<double> logits; // T*V
};

void rmsnorm_forward(const double* x, const double* gain, int T, int D, double* out,
                     double* rms) {
  for (int t = 0; t < T; ++t) {
    double ss = 0.0;
    for (int i = 0; i < D; ++i) ss += x[t * D + i] * x[t * D + i];
    const double r = std::sqrt(ss / D + kRmsEps);
    rms[t] = r;
    for (int i = 0; i < D; ++i) out[t * D + i] = gain[i] * x[t * D + i] / r;
  }
}

// dLoss/dx for y_i = g_i x_i / r, r = sqrt(mean(x^2) + eps). Accumulates gain grads.
void rmsnorm_backward(const double* x, const double* gain, const double* rms, const double* dy,
                      int T, int D, double* dx, double* dgain) {
  for (int t = 0; t < T; ++t) {
    const double r = rms[t];
    double dot = 0.0;
    for (int i = 0; i < D; ++i) {
      dot += dy[t * D + i] * gain[i] * x[t * D + i];
      dgain[i] += dy[t * D + i] * x[t * D + i] / r;
    }
    for (int j = 0; j < D; ++j) {
      dx[t * D + j] += gain[j] * dy[t * D + j] / r - x[t * D + j] * dot / (D * r * r * r);
    }
  }
}

void matvec_rows(const double* W, const double* x, int rows, int cols, double* y) {
  for (int i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += W[i * cols + j] * x[j];
    y[i] = acc;
  }
}

void validate_tokens(const PolicyConfig& cfg, const TokenSeq& toks) {
  if (toks.empty()) throw InputError("empty token prefix");
  if (static_cast<int>(toks.size()) > cfg.context_len) throw InputError("prefix exceeds context_len");
  for (int t : toks) {
    if (t < 0 || t >= cfg.vocab_size) throw InputError("token id out of range");
  }
}

void forward_all(const ParameterSet& p, const TokenSeq& toks, Cache& c) {
  validate_tokens(p.config, toks);
  const Views w(p);
  const int T = static_cast<int>(toks.size());
  const int D = w.D, H = w.H, V = w.V;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));

  c.T = T;
  c.blocks.resize(w.B);

  std::vector<double> cur(static_cast<std::size_t>(T) * D);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < D; ++i) {
      cur[t * D + i] = w.tokE[toks[t] * D + i] + w.posE[t * D + i];
    }
  }

  for (int b = 0; b < w.B; ++b) {
    BlockCache& bc = c.blocks[b];
    bc.x_in = cur;
    bc.n1.resize(cur.size());
    bc.rms1.resize(T);
    rmsnorm_forward(bc.x_in.data(), w.g1(b), T, D, bc.n1.data(), bc.rms1.data());

    bc.q.resize(cur.size());
    bc.k.resize(cur.size());
    bc.v.resize(cur.size());
    for (int t = 0; t < T; ++t) {
      matvec_rows(w.Wq(b), bc.n1.data() + t * D, D, D, bc.q.data() + t * D);
      matvec_rows(w.Wk(b), bc.n1.data() + t * D, D, D, bc.k.data() + t * D);
      matvec_rows(w.Wv(b), bc.n1.data() + t * D, D, D, bc.v.data() + t * D);
    }

    bc.att.assign(static_cast<std::size_t>(T) * T, 0.0);
    bc.z.assign(cur.size(), 0.0);
    for (int t = 0; t < T; ++t) {
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> sc(t + 1);
      for (int s = 0; s <= t; ++s) {
        double acc = 0.0;
        for (int i = 0; i < D; ++i) acc += bc.q[t * D + i] * bc.k[s * D + i];
        sc[s] = acc * inv_sqrt_d;
        mx = std::max(mx, sc[s]);
      }
      double denom = 0.0;
      for (int s = 0; s <= t; ++s) {
        sc[s] = std::exp(sc[s] - mx);
        denom += sc[s];
      }
      for (int s = 0; s <= t; ++s) {
        const double a = sc[s] / denom;
        bc.att[t * T + s] = a;
        for (int i = 0; i < D; ++i) bc.z[t * D + i] += a * bc.v[s * D + i];
      }
    }

    bc.x_mid.resize(cur.size());
    std::vector<double> o(D);
    for (int t = 0; t < T; ++t) {
      matvec_rows(w.Wo(b), bc.z.data() + t * D, D, D, o.data());
      for (int i = 0; i < D; ++i) bc.x_mid[t * D + i] = bc.x_in[t * D + i] + o[i];
    }

    bc.n2.resize(cur.size());
    bc.rms2.resize(T);
    rmsnorm_forward(bc.x_mid.data(), w.g2(b), T, D, bc.n2.data(), bc.rms2.data());

    bc.h.resize(static_cast<std::size_t>(T) * H);
    for (int t = 0; t < T; ++t) {
      for (int u = 0; u < H; ++u) {
        double acc = w.b1(b)[u];
        for (int j = 0; j < D; ++j) acc += w.W1(b)[u * D + j] * bc.n2[t * D + j];
        bc.h[t * H + u] = std::tanh(acc);
      }
      for (int i = 0; i < D; ++i) {
        double acc = w.b2(b)[i];
        for (int u = 0; u < H; ++u) acc += w.W2(b)[i * H + u] * bc.h[t * H + u];
        cur[t * D + i] = bc.x_mid[t * D + i] + acc;
      }
    }
  }

  c.x_out = cur;
  c.nf.resize(cur.size());
  c.rmsf.resize(T);
  rmsnorm_forward(c.x_out.data(), w.gf, T, D, c.nf.data(), c.rmsf.data());

  c.logits.resize(static_cast<std::size_t>(T) * V);
  for (int t = 0; t < T; ++t) {
    for (int v = 0; v < V; ++v) {
      double acc = w.bh[v];
      for (int j = 0; j < D; ++j) acc += w.Wh[v * D + j] * c.nf[t * D + j];
      c.logits[t * V + v] = acc;
    }
  }
}

// Backpropagate dLoss/dlogits (T*V) through the cached forward pass.
GradientSet backward_all(const ParameterSet& p, const TokenSeq& toks, const Cache& c,
                         const std::vector<double>& dlogits) {
  const Views w(p);
  GradientSet grad = ParameterSet::zeros_like(p.config);
  GradViews gw(grad);
  const int T = c.T, D = w.D, H = w.H, V = w.V;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));

  // Head.
  std::vector<double> dnf(static_cast<std::size_t>(T) * D, 0.0);
  for (int t = 0; t < T; ++t) {
    for (int v = 0; v < V; ++v) {
      const double dl = dlogits[t * V + v];
      if (dl == 0.0) continue;
      gw.bh[v] += dl;
      for (int j = 0; j < D; ++j) {
        gw.Wh[v * D + j] += dl * c.nf[t * D + j];
        dnf[t * D + j] += dl * w.Wh[v * D + j];
      }
    }
  }

  std::vector<double> dcur(static_cast<std::size_t>(T) * D, 0.0);
  rmsnorm_backward(c.x_out.data(), w.gf, c.rmsf.data(), dnf.data(), T, D, dcur.data(), gw.gf);

  for (int b = w.B - 1; b >= 0; --b) {
    const BlockCache& bc = c.blocks[b];

    // MLP: x_next = x_mid + W2 tanh(W1 n2 + b1) + b2.
    std::vector<double> dx_mid = dcur;  // residual path
    std::vector<double> dn2(static_cast<std::size_t>(T) * D, 0.0);
    for (int t = 0; t < T; ++t) {
      for (int u = 0; u < H; ++u) {
        double dh = 0.0;
        for (int i = 0; i < D; ++i) {
          dh += w.W2(b)[i * H + u] * dcur[t * D + i];
        }
        const double hv = bc.h[t * H + u];
        const double dpre = dh * (1.0 - hv * hv);
        gw.b1(b)[u] += dpre;
        for (int j = 0; j < D; ++j) {
          gw.W1(b)[u * D + j] += dpre * bc.n2[t * D + j];
          dn2[t * D + j] += dpre * w.W1(b)[u * D + j];
        }
      }
      for (int i = 0; i < D; ++i) {
        gw.b2(b)[i] += dcur[t * D + i];
        for (int u = 0; u < H; ++u) {
          gw.W2(b)[i * H + u] += dcur[t * D + i] * bc.h[t * H + u];
        }
      }
    }
    rmsnorm_backward(bc.x_mid.data(), w.g2(b), bc.rms2.data(), dn2.data(), T, D, dx_mid.data(),
                     gw.g2(b));

    // Attention: x_mid = x_in + Wo z.
    std::vector<double> dx_in = dx_mid;  // residual path
    std::vector<double> dz(static_cast<std::size_t>(T) * D, 0.0);
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < D; ++i) {
        const double g = dx_mid[t * D + i];
        if (g == 0.0) continue;
        for (int j = 0; j < D; ++j) {
          gw.Wo(b)[i * D + j] += g * bc.z[t * D + j];
          dz[t * D + j] += g * w.Wo(b)[i * D + j];
        }
      }
    }

    std::vector<double> dq(static_cast<std::size_t>(T) * D, 0.0);
    std::vector<double> dk(static_cast<std::size_t>(T) * D, 0.0);
    std::vector<double> dv(static_cast<std::size_t>(T) * D, 0.0);
    for (int t = 0; t < T; ++t) {
      std::vector<double> da(t + 1, 0.0);
      for (int s = 0; s <= t; ++s) {
        const double a = bc.att[t * T + s];
        double acc = 0.0;
        for (int i = 0; i < D; ++i) {
          acc += dz[t * D + i] * bc.v[s * D + i];
          dv[s * D + i] += a * dz[t * D + i];
        }
        da[s] = acc;
      }
      double dot = 0.0;
      for (int s = 0; s <= t; ++s) dot += bc.att[t * T + s] * da[s];
      for (int s = 0; s <= t; ++s) {
        const double ds = bc.att[t * T + s] * (da[s] - dot);
        for (int i = 0; i < D; ++i) {
          dq[t * D + i] += ds * bc.k[s * D + i] * inv_sqrt_d;
          dk[s * D + i] += ds * bc.q[t * D + i] * inv_sqrt_d;
        }
      }
    }

    std::vector<double> dn1(static_cast<std::size_t>(T) * D, 0.0);
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < D; ++i) {
        const double gq = dq[t * D + i], gk = dk[t * D + i], gv = dv[t * D + i];
        for (int j = 0; j < D; ++j) {
          gw.Wq(b)[i * D + j] += gq * bc.n1[t * D + j];
          gw.Wk(b)[i * D + j] += gk * bc.n1[t * D + j];
          gw.Wv(b)[i * D + j] += gv * bc.n1[t * D + j];
          dn1[t * D + j] += gq * w.Wq(b)[i * D + j] + gk * w.Wk(b)[i * D + j] +
                            gv * w.Wv(b)[i * D + j];
        }
      }
    }
    rmsnorm_backward(bc.x_in.data(), w.g1(b), bc.rms1.data(), dn1.data(), T, D, dx_in.data(),
                     gw.g1(b));
    dcur = std::move(dx_in);
  }

  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < D; ++i) {
      gw.tokE[toks[t] * D + i] += dcur[t * D + i];
      gw.posE[t * D + i] += dcur[t * D + i];
    }
  }
  return grad;
}

}  // namespace

ParameterSet init_params(const PolicyConfig& cfg) {
  cfg.validate();
  ParameterSet p = ParameterSet::zeros_like(cfg);
  const int V = cfg.vocab_size, L = cfg.context_len, D = cfg.d_model, B = cfg.n_blocks,
            H = cfg.d_mlp;
  const std::uint64_t key = rng::derive(cfg.seed, 0x1A17u);

  std::uint64_t counter = 0;
  auto fill = [&](double* dst, std::size_t n, double scale) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = scale * rng::gaussian(key, counter++);
  };

  // Embeddings and all weight matrices at 1/sqrt(fan_in); biases zero, gains one.
  const double s_d = 1.0 / std::sqrt(static_cast<double>(D));
  const double s_h = 1.0 / std::sqrt(static_cast<double>(H));

  auto& embed = p.group(ParamGroup::Embed);
  fill(embed.data(), embed.size(), s_d);

  auto& attn = p.group(ParamGroup::Attn);
  fill(attn.data(), attn.size(), s_d);

  auto& mlp = p.group(ParamGroup::Mlp);
  const std::size_t mlp_blk = static_cast<std::size_t>(D) * H + H + static_cast<std::size_t>(H) * D + D;
  for (int b = 0; b < B; ++b) {
    double* base = mlp.data() + b * mlp_blk;
    fill(base, static_cast<std::size_t>(H) * D, s_d);  // W1
    // b1 zero
    fill(base + static_cast<std::size_t>(H) * D + H, static_cast<std::size_t>(D) * H, s_h);  // W2
    // b2 zero
  }

  auto& norm = p.group(ParamGroup::Norm);
  std::fill(norm.begin(), norm.end(), 1.0);

  auto& head = p.group(ParamGroup::Head);
  fill(head.data(), static_cast<std::size_t>(V) * D, s_d);  // Wh; bias stays zero
  (void)L;
  return p;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    denom += p[i];
  }
  for (double& x : p) x /= denom;
  return p;
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
  std::vector<double> lp(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double x : logits) denom += std::exp(x - mx);
  const double lse = mx + std::log(denom);
  for (std::size_t i = 0; i < logits.size(); ++i) lp[i] = logits[i] - lse;
  return lp;
}

std::vector<double> forward_logits(const ParameterSet& params, const TokenSeq& prefix) {
  Cache c;
  forward_all(params, prefix, c);
  const int V = params.config.vocab_size;
  return std::vector<double>(c.logits.end() - V, c.logits.end());
}

std::vector<double> token_distribution(const ParameterSet& params, const TokenSeq& prefix,
                                       double temperature) {
  if (!(temperature > 0.0)) throw InputError("temperature must be > 0");
  std::vector<double> logits = forward_logits(params, prefix);
  for (double& x : logits) x /= temperature;
  return softmax(logits);
}

std::vector<double> sequence_logprobs(const ParameterSet& params, const TokenSeq& prompt,
                                      const TokenSeq& completion, double temperature) {
  if (!(temperature > 0.0)) throw InputError("temperature must be > 0");
  if (prompt.empty()) throw InputError("empty prompt");
  if (completion.empty()) return {};
  if (static_cast<int>(prompt.size() + completion.size()) > params.config.context_len) {
    throw InputError("prompt + completion exceeds context_len");
  }
  TokenSeq seq = prompt;
  seq.insert(seq.end(), completion.begin(), completion.end() - 1);
  Cache c;
  forward_all(params, seq, c);
  const int V = params.config.vocab_size;
  const int p = static_cast<int>(prompt.size());
  std::vector<double> out(completion.size());
  std::vector<double> row(V);
  for (std::size_t t = 0; t < completion.size(); ++t) {
    const int pos = p - 1 + static_cast<int>(t);
    std::copy(c.logits.begin() + static_cast<std::size_t>(pos) * V,
              c.logits.begin() + static_cast<std::size_t>(pos + 1) * V, row.begin());
    if (temperature != 1.0) {
      for (double& x : row) x /= temperature;
    }
    out[t] = log_softmax(row)[completion[t]];
  }
  return out;
}

GradientSet grad_weighted_logprob(const ParameterSet& params, const TokenSeq& prompt,
                                  const TokenSeq& completion,
                                  const std::vector<double>& weights) {
  if (weights.size() != completion.size()) throw InputError("weights/completion length mismatch");
  if (prompt.empty()) throw InputError("empty prompt");
  if (completion.empty()) return ParameterSet::zeros_like(params.config);
  if (static_cast<int>(prompt.size() + completion.size()) > params.config.context_len) {
    throw InputError("prompt + completion exceeds context_len");
  }
  TokenSeq seq = prompt;
  seq.insert(seq.end(), completion.begin(), completion.end() - 1);
  Cache c;
  forward_all(params, seq, c);
  const int V = params.config.vocab_size;
  const int p = static_cast<int>(prompt.size());
  std::vector<double> dlogits(c.logits.size(), 0.0);
  std::vector<double> row(V);
  for (std::size_t t = 0; t < completion.size(); ++t) {
    const double wt = weights[t];
    if (wt == 0.0) continue;
    const int pos = p - 1 + static_cast<int>(t);
    std::copy(c.logits.begin() + static_cast<std::size_t>(pos) * V,
              c.logits.begin() + static_cast<std::size_t>(pos + 1) * V, row.begin());
    const std::vector<double> prob = softmax(row);
    for (int v = 0; v < V; ++v) {
      dlogits[static_cast<std::size_t>(pos) * V + v] -= wt * prob[v];
    }
    dlogits[static_cast<std::size_t>(pos) * V + completion[t]] += wt;
  }
  return backward_all(params, seq, c, dlogits);
}

// ---------------------------------------------------------------------------
// Checkpoint IO
// ---------------------------------------------------------------------------

namespace {

void write_u64(std::ofstream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::ifstream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_params(const ParameterSet& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ResourceError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, 8);
  const auto& c = params.config;
  write_u64(os, static_cast<std::uint64_t>(c.vocab_size));
  write_u64(os, static_cast<std::uint64_t>(c.context_len));
  write_u64(os, static_cast<std::uint64_t>(c.d_model));
  write_u64(os, static_cast<std::uint64_t>(c.n_blocks));
  write_u64(os, static_cast<std::uint64_t>(c.d_mlp));
  write_u64(os, c.seed);
  const std::vector<double> flat = params.flatten();
  write_u64(os, flat.size());
  static_assert(sizeof(double) == 8);
  for (double x : flat) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    write_u64(os, bits);
  }
  if (!os) throw ResourceError("checkpoint write failed: " + path);
}

ParameterSet load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ResourceError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw InputError("bad checkpoint magic: " + path);
  }
  PolicyConfig cfg;
  cfg.vocab_size = static_cast<int>(read_u64(is));
  cfg.context_len = static_cast<int>(read_u64(is));
  cfg.d_model = static_cast<int>(read_u64(is));
  cfg.n_blocks = static_cast<int>(read_u64(is));
  cfg.d_mlp = static_cast<int>(read_u64(is));
  cfg.seed = read_u64(is);
  cfg.validate();
  const std::uint64_t n = read_u64(is);
  std::vector<double> flat(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t bits = read_u64(is);
    std::memcpy(&flat[i], &bits, 8);
  }
  if (!is) throw InputError("truncated checkpoint: " + path);
  return ParameterSet::unflatten(cfg, flat);
}

}  // namespace psnlab
