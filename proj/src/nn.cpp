#include "avatarcraft/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "avatarcraft/io.hpp"
#include "avatarcraft/rng.hpp"

namespace avatarcraft::nn {

// --- parameters ------------------------------------------------------------------

Param& ParamStore::add(const std::string& name, int rows, int cols, bool decay) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->rows = rows;
  p->cols = cols;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  p->decay = decay;
  Param& ref = *p;
  index_[name] = p.get();
  params_.push_back(std::move(p));
  return ref;
}

Param& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return *it->second;
}

const Param& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return *it->second;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

std::string ParamStore::checksum() const {
  std::string acc;
  for (const auto& p : params_) {
    acc += p->name + ":" + std::to_string(p->rows) + "x" + std::to_string(p->cols) + ":";
    acc += io::sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(p->value.data()),
                                    static_cast<std::size_t>(p->value.size()) * sizeof(float)));
  }
  return io::sha256_hex(acc);
}

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : params_)
    if (p->name.rfind(prefix, 0) == 0) p->trainable = trainable;
}

std::vector<Param*> ParamStore::pointers() {
  std::vector<Param*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

void init_xavier(Param& p, std::uint64_t seed) {
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / (p.rows + p.cols));
  for (Eigen::Index i = 0; i < p.value.size(); ++i)
    p.value.data()[i] = static_cast<float>(rng.uniform(-limit, limit));
}

void init_normal(Param& p, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  for (Eigen::Index i = 0; i < p.value.size(); ++i)
    p.value.data()[i] = static_cast<float>(stddev * rng.normal());
}

// --- Linear --------------------------------------------------------------------------

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out,
                      std::uint64_t seed) {
  Linear l;
  l.weight = &store.add(name + ".weight", in, out, true);
  l.bias = &store.add(name + ".bias", 1, out, false);
  init_xavier(*l.weight, seed);
  return l;
}

Mat Linear::forward(const Mat& x) const {
  Mat y = x * weight->value;
  y.rowwise() += bias->value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) const {
  if (weight->trainable) {
    weight->grad.noalias() += x.transpose() * dy;
    bias->grad.row(0) += dy.colwise().sum();
  }
  return dy * weight->value.transpose();
}

// --- LayerNorm -----------------------------------------------------------------------

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int dim) {
  LayerNorm ln;
  ln.gamma = &store.add(name + ".weight", 1, dim, false);
  ln.beta = &store.add(name + ".bias", 1, dim, false);
  ln.gamma->value.setOnes();
  return ln;
}

Mat LayerNorm::forward(const Mat& x, Cache* cache) const {
  const auto n = x.cols();
  Mat xhat(x.rows(), n);
  Eigen::VectorXf inv(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const float mean = x.row(r).mean();
    const float var = (x.row(r).array() - mean).square().mean();
    inv(r) = 1.0f / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * inv(r);
  }
  Mat y = xhat.array().rowwise() * gamma->value.row(0).array();
  y.rowwise() += beta->value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

Mat LayerNorm::backward(const Cache& c, const Mat& dy) const {
  if (gamma->trainable) {
    gamma->grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta->grad.row(0) += dy.colwise().sum();
  }
  const auto n = static_cast<float>(dy.cols());
  Mat dxhat = dy.array().rowwise() * gamma->value.row(0).array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const float s1 = dxhat.row(r).sum();
    const float s2 = dxhat.row(r).dot(c.xhat.row(r));
    dx.row(r) = (c.inv_std(r) / n) * (n * dxhat.row(r).array() - s1 - c.xhat.row(r).array() * s2);
  }
  return dx;
}

// --- GELU ------------------------------------------------------------------------------

Mat gelu(const Mat& x) {
  return x.unaryExpr([](float v) { return 0.5f * v * (1.0f + std::erf(v * float(M_SQRT1_2))); });
}

Mat gelu_backward(const Mat& x, const Mat& dy) {
  const float inv_sqrt_2pi = 0.3989422804014327f;
  Mat d = x.unaryExpr([&](float v) {
    return 0.5f * (1.0f + std::erf(v * float(M_SQRT1_2))) + v * inv_sqrt_2pi * std::exp(-0.5f * v * v);
  });
  return d.cwiseProduct(dy);
}

// --- Attention -------------------------------------------------------------------------

Attention Attention::create(ParamStore& store, const std::string& name, int dim, int heads,
                            std::uint64_t seed) {
  if (dim % heads != 0) throw std::invalid_argument("attention heads must divide the width");
  Attention a;
  a.qkv = Linear::create(store, name + ".qkv", dim, 3 * dim, Rng::derive(seed, 1));
  a.proj = Linear::create(store, name + ".proj", dim, dim, Rng::derive(seed, 2));
  a.heads = heads;
  return a;
}

namespace {
void softmax_rows(Mat& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const float mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
}
}  // namespace

Mat Attention::forward(const Mat& x, Cache* cache) const {
  const auto tokens = x.rows();
  const auto dim = x.cols();
  const auto dh = dim / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Mat qkv_out = qkv.forward(x);
  Mat context(tokens, dim);
  if (cache) cache->probs.resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto q = qkv_out.middleCols(h * dh, dh);
    const auto k = qkv_out.middleCols(dim + h * dh, dh);
    const auto v = qkv_out.middleCols(2 * dim + h * dh, dh);
    Mat p = (q * k.transpose()) * scale;
    softmax_rows(p);
    context.middleCols(h * dh, dh).noalias() = p * v;
    if (cache) cache->probs[static_cast<std::size_t>(h)] = std::move(p);
  }
  Mat out = proj.forward(context);
  if (cache) {
    cache->x = x;
    cache->qkv = std::move(qkv_out);
    cache->context = std::move(context);
  }
  return out;
}

Mat Attention::backward(const Cache& c, const Mat& dy) const {
  const auto tokens = c.x.rows();
  const auto dim = c.x.cols();
  const auto dh = dim / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const Mat dcontext = proj.backward(c.context, dy);
  Mat dqkv(tokens, 3 * dim);
  for (int h = 0; h < heads; ++h) {
    const auto q = c.qkv.middleCols(h * dh, dh);
    const auto k = c.qkv.middleCols(dim + h * dh, dh);
    const auto v = c.qkv.middleCols(2 * dim + h * dh, dh);
    const Mat& p = c.probs[static_cast<std::size_t>(h)];
    const auto dout = dcontext.middleCols(h * dh, dh);
    const Mat dp = dout * v.transpose();
    dqkv.middleCols(2 * dim + h * dh, dh).noalias() = p.transpose() * dout;
    Mat ds = p.cwiseProduct(dp);
    const Eigen::VectorXf row = ds.rowwise().sum();
    ds -= p.cwiseProduct(row.replicate(1, tokens));
    ds *= scale;
    dqkv.middleCols(h * dh, dh).noalias() = ds * k;
    dqkv.middleCols(dim + h * dh, dh).noalias() = ds.transpose() * q;
  }
  return qkv.backward(c.x, dqkv);
}

// --- Block -------------------------------------------------------------------------------

Block Block::create(ParamStore& store, const std::string& name, int dim, int heads,
                    int mlp_ratio, std::uint64_t seed) {
  Block b;
  b.ln1 = LayerNorm::create(store, name + ".ln1", dim);
  b.attn = Attention::create(store, name + ".attn", dim, heads, Rng::derive(seed, 1));
  b.ln2 = LayerNorm::create(store, name + ".ln2", dim);
  b.fc1 = Linear::create(store, name + ".fc1", dim, dim * mlp_ratio, Rng::derive(seed, 2));
  b.fc2 = Linear::create(store, name + ".fc2", dim * mlp_ratio, dim, Rng::derive(seed, 3));
  return b;
}

Mat Block::forward(const Mat& x, Cache* c) const {
  if (!c) {
    Mat h1 = x + attn.forward(ln1.forward(x, nullptr), nullptr);
    return h1 + fc2.forward(gelu(fc1.forward(ln2.forward(h1, nullptr))));
  }
  Mat h1 = x + attn.forward(ln1.forward(x, &c->ln1), &c->attn);
  c->ln2_out = ln2.forward(h1, &c->ln2);
  c->fc1_out = fc1.forward(c->ln2_out);
  c->act = gelu(c->fc1_out);
  Mat out = h1 + fc2.forward(c->act);
  c->h1 = std::move(h1);
  return out;
}

Mat Block::backward(const Cache& c, const Mat& dy) const {
  Mat dact = fc2.backward(c.act, dy);
  Mat dh1 = dy + ln2.backward(c.ln2, fc1.backward(c.ln2_out, gelu_backward(c.fc1_out, dact)));
  return dh1 + ln1.backward(c.ln1, attn.backward(c.attn, dh1));
}

Mat sincos_2d(int grid, int dim) {
  if (dim % 4 != 0) throw std::invalid_argument("sincos_2d: dim must be divisible by 4");
  Mat table(grid * grid, dim);
  const int quarter = dim / 4;
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) {
      const int token = r * grid + c;
      for (int i = 0; i < quarter; ++i) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / quarter);
        table(token, i) = static_cast<float>(std::sin(r * omega));
        table(token, quarter + i) = static_cast<float>(std::cos(r * omega));
        table(token, 2 * quarter + i) = static_cast<float>(std::sin(c * omega));
        table(token, 3 * quarter + i) = static_cast<float>(std::cos(c * omega));
      }
    }
  return table;
}

// --- AdamW -------------------------------------------------------------------------------

AdamW::AdamW(std::vector<Param*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Param* p : params_) {
    m_.push_back(Mat::Zero(p->rows, p->cols));
    v_.push_back(Mat::Zero(p->rows, p->cols));
  }
}

void AdamW::step(double lr, float grad_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
  const auto step = static_cast<float>(lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(config_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    if (!p.trainable) continue;
    if (p.decay && config_.weight_decay > 0)
      p.value *= static_cast<float>(1.0 - lr * config_.weight_decay);
    const auto g = p.grad.array() * grad_scale;
    m_[i].array() = b1 * m_[i].array() + (1 - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (1 - b2) * g.square();
    p.value.array() -= step * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
  }
}

double cosine_lr(double base, std::int64_t step, std::int64_t total, std::int64_t warmup,
                 double floor) {
  if (warmup > 0 && step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return base;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  return base * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(M_PI * progress)));
}

}  // namespace avatarcraft::nn
