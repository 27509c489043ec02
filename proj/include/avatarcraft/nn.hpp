#pragma once

// Minimal CPU transformer toolkit with hand-written backward passes.
// Activations are row-major (tokens x features) float matrices; every layer
// keeps the forward cache its backward pass needs in a caller-owned struct.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace avatarcraft::nn {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<float, 1, Eigen::Dynamic>;


/// A named trainable tensor; value and grad are stored flat as (rows x cols).
struct Param {
  std::string name;
  int rows = 0;
  int cols = 0;
  Mat value;
  Mat grad;
  bool decay = true;  // AdamW weight decay applies
  bool trainable = true;
};

/// Owns parameters in registration order. Order is part of the checkpoint
/// layout and of the optimizer state.
class ParamStore {
 public:
  Param& add(const std::string& name, int rows, int cols, bool decay);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<std::unique_ptr<Param>>& params() { return params_; }
  const std::vector<std::unique_ptr<Param>>& params() const { return params_; }

  void zero_grad();
  std::size_t count() const;
  /// SHA-256 over names, shapes and raw value bytes.
  std::string checksum() const;
  void set_trainable(const std::string& prefix, bool trainable);
  std::vector<Param*> pointers();

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, Param*> index_;
};

/// Initialisers draw from avatarcraft::Rng so weights are reproducible.
void init_xavier(Param& p, std::uint64_t seed);
void init_normal(Param& p, double stddev, std::uint64_t seed);

// --- layers --------------------------------------------------------------------

struct Linear {
  Param* weight = nullptr;  // in x out
  Param* bias = nullptr;    // 1 x out

  static Linear create(ParamStore& store, const std::string& name, int in, int out,
                       std::uint64_t seed);
  Mat forward(const Mat& x) const;
  /// Accumulates parameter gradients; returns dL/dx.
  Mat backward(const Mat& x, const Mat& dy) const;
};

struct LayerNorm {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  float eps = 1e-5f;

  struct Cache {
    Mat xhat;
    Eigen::VectorXf inv_std;
  };

  static LayerNorm create(ParamStore& store, const std::string& name, int dim);
  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Cache& cache, const Mat& dy) const;
};

/// Exact (erf) GELU.
Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);

struct Attention {
  Linear qkv;
  Linear proj;
  int heads = 1;

  struct Cache {
    Mat x;
    Mat qkv;
    std::vector<Mat> probs;  // per head, tokens x tokens
    Mat context;
  };

  static Attention create(ParamStore& store, const std::string& name, int dim, int heads,
                          std::uint64_t seed);
  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Cache& cache, const Mat& dy) const;
};

/// Pre-norm transformer block: x + attn(ln1(x)); x + mlp(ln2(x)).
struct Block {
  LayerNorm ln1, ln2;
  Attention attn;
  Linear fc1, fc2;

  struct Cache {
    LayerNorm::Cache ln1, ln2;
    Attention::Cache attn;
    Mat h1;      // after first residual
    Mat ln2_out;
    Mat fc1_out;
    Mat act;
  };

  static Block create(ParamStore& store, const std::string& name, int dim, int heads,
                      int mlp_ratio, std::uint64_t seed);
  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Cache& cache, const Mat& dy) const;
};

/// Fixed 2-D sine-cosine position table (grid*grid x dim); half the channels
/// encode the row, half the column.
Mat sincos_2d(int grid, int dim);

// --- optimisation -----------------------------------------------------------------

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

class AdamW {
 public:
  AdamW(std::vector<Param*> params, AdamWConfig config);
  /// One step over trainable params; grads are scaled by grad_scale first.
  void step(double lr, float grad_scale = 1.0f);
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamWConfig config_;
  std::vector<Mat> m_, v_;
  std::int64_t t_ = 0;
};

/// Linear warmup then cosine decay to floor * base.
double cosine_lr(double base, std::int64_t step, std::int64_t total, std::int64_t warmup,
                 double floor = 0.05);

}  // namespace avatarcraft::nn
