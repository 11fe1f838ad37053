#include "poisonbench/nn.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "poisonbench/common.hpp"

namespace poisonbench {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

Tensor batch_from_images(const std::vector<const Image*>& images) {
  if (images.empty()) throw DimensionError("empty image batch");
  const Image& first = *images[0];
  Tensor t(static_cast<int>(images.size()), first.c, first.h, first.w);
  for (size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    if (img.c != first.c || img.h != first.h || img.w != first.w)
      throw DimensionError("ragged image batch");
    float* dst = t.sample(static_cast<int>(i));
    for (size_t j = 0; j < img.pixels.size(); ++j)
      dst[j] = static_cast<float>(img.pixels[j]) / 255.0f;
  }
  return t;
}

Tensor tensor_from_image(const Image& image) {
  return batch_from_images({&image});
}

// --- conv ------------------------------------------------------------------

namespace {

// col is [in*k*k, oh*ow], column-major.
void im2col(const float* src, int c, int h, int w, int k, int pad,
            Eigen::MatrixXf& col) {
  const int oh = h + 2 * pad - k + 1;
  const int ow = w + 2 * pad - k + 1;
  col.setZero();
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int row = (ch * k + ky) * k + kx;
        for (int y = 0; y < oh; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < ow; ++x) {
            const int sx = x + kx - pad;
            if (sx < 0 || sx >= w) continue;
            col(row, y * ow + x) = src[(static_cast<size_t>(ch) * h + sy) * w + sx];
          }
        }
      }
}

void col2im_add(const Eigen::MatrixXf& col, int c, int h, int w, int k, int pad,
                float* dst) {
  const int oh = h + 2 * pad - k + 1;
  const int ow = w + 2 * pad - k + 1;
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int row = (ch * k + ky) * k + kx;
        for (int y = 0; y < oh; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < ow; ++x) {
            const int sx = x + kx - pad;
            if (sx < 0 || sx >= w) continue;
            dst[(static_cast<size_t>(ch) * h + sy) * w + sx] += col(row, y * ow + x);
          }
        }
      }
}

}  // namespace

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int ksize, int pad,
               Rng& init_rng)
    : name_(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize),
      pad_(pad) {
  const size_t fan_in = static_cast<size_t>(in_ch) * ksize * ksize;
  weight_.resize(static_cast<size_t>(out_ch) * fan_in);
  bias_.assign(out_ch, 0.f);
  weight_g_.assign(weight_.size(), 0.f);
  bias_g_.assign(bias_.size(), 0.f);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : weight_) v = static_cast<float>(init_rng.normal() * stddev);
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  if (x.c != in_ch_) throw DimensionError(name_ + ": channel mismatch");
  const int oh = x.h + 2 * pad_ - ksize_ + 1;
  const int ow = x.w + 2 * pad_ - ksize_ + 1;
  if (oh < 1 || ow < 1) throw DimensionError(name_ + ": output collapses");
  Tensor y(x.n, out_ch_, oh, ow);
  const int fan_in = in_ch_ * ksize_ * ksize_;
  Eigen::MatrixXf col(fan_in, oh * ow);
  CMapRow W(weight_.data(), out_ch_, fan_in);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), in_ch_, x.h, x.w, ksize_, pad_, col);
    MapRow out(y.sample(i), out_ch_, oh * ow);
    out.noalias() = W * col;
    out.colwise() += Eigen::Map<const Eigen::VectorXf>(bias_.data(), out_ch_);
  }
  if (train) cached_in_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, bool param_grads) {
  const Tensor& x = cached_in_;
  if (x.n != grad_out.n) throw DimensionError(name_ + ": stale cache");
  const int oh = grad_out.h, ow = grad_out.w;
  const int fan_in = in_ch_ * ksize_ * ksize_;
  Tensor gx(x.n, x.c, x.h, x.w);
  Eigen::MatrixXf col(fan_in, oh * ow);
  Eigen::MatrixXf gcol(fan_in, oh * ow);
  CMapRow W(weight_.data(), out_ch_, fan_in);
  MapRow gW(weight_g_.data(), out_ch_, fan_in);
  for (int i = 0; i < x.n; ++i) {
    CMapRow gout(grad_out.sample(i), out_ch_, oh * ow);
    if (param_grads) {
      im2col(x.sample(i), in_ch_, x.h, x.w, ksize_, pad_, col);
      gW.noalias() += gout * col.transpose();
      // fixed-order scalar reduction: Eigen's mapped sums bracket by heap
      // alignment, which breaks bitwise retrain reproducibility
      for (int o = 0; o < out_ch_; ++o) {
        const float* row = grad_out.sample(i) + static_cast<size_t>(o) * oh * ow;
        float acc = 0.f;
        for (int j = 0; j < oh * ow; ++j) acc += row[j];
        bias_g_[static_cast<size_t>(o)] += acc;
      }
    }
    gcol.noalias() = W.transpose() * gout;
    col2im_add(gcol, in_ch_, x.h, x.w, ksize_, pad_, gx.sample(i));
  }
  return gx;
}

std::vector<ParamRef> Conv2d::params() {
  return {{name_ + ".weight", &weight_, &weight_g_},
          {name_ + ".bias", &bias_, &bias_g_}};
}

// --- pointwise & pooling ---------------------------------------------------

Tensor ReLU::forward(const Tensor& x, bool train) {
  Tensor y = x;
  if (train) mask_.assign(x.size(), 0);
  for (size_t i = 0; i < y.v.size(); ++i) {
    if (y.v[i] > 0.f) {
      if (train) mask_[i] = 1;
    } else {
      y.v[i] = 0.f;
    }
  }
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out, bool) {
  if (mask_.size() != grad_out.size())
    throw DimensionError(name_ + ": stale cache");
  Tensor gx = grad_out;
  for (size_t i = 0; i < gx.v.size(); ++i)
    if (!mask_[i]) gx.v[i] = 0.f;
  return gx;
}

Tensor MaxPool2::forward(const Tensor& x, bool train) {
  if (x.h % 2 || x.w % 2) throw DimensionError(name_ + ": odd spatial size");
  const int oh = x.h / 2, ow = x.w / 2;
  Tensor y(x.n, x.c, oh, ow);
  if (train) {
    in_h_ = x.h;
    in_w_ = x.w;
    argmax_.assign(y.size(), 0);
  }
  size_t oi = 0;
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch)
      for (int y0 = 0; y0 < oh; ++y0)
        for (int x0 = 0; x0 < ow; ++x0, ++oi) {
          float best = -1e30f;
          int best_idx = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int yy = 2 * y0 + dy, xx = 2 * x0 + dx;
              const float val = x.at(i, ch, yy, xx);
              if (val > best) {
                best = val;
                best_idx = yy * x.w + xx;
              }
            }
          y.v[oi] = best;
          if (train) argmax_[oi] = best_idx;
        }
  return y;
}

Tensor MaxPool2::backward(const Tensor& grad_out, bool) {
  if (argmax_.size() != grad_out.size())
    throw DimensionError(name_ + ": stale cache");
  Tensor gx(grad_out.n, grad_out.c, in_h_, in_w_);
  size_t oi = 0;
  for (int i = 0; i < grad_out.n; ++i)
    for (int ch = 0; ch < grad_out.c; ++ch) {
      float* plane = gx.v.data() +
                     (static_cast<size_t>(i) * gx.c + ch) * in_h_ * in_w_;
      for (int y0 = 0; y0 < grad_out.h; ++y0)
        for (int x0 = 0; x0 < grad_out.w; ++x0, ++oi)
          plane[argmax_[oi]] += grad_out.v[oi];
    }
  return gx;
}

// --- linear ----------------------------------------------------------------

Linear::Linear(std::string name, int in_features, int out_features,
               Rng& init_rng)
    : name_(std::move(name)), in_f_(in_features), out_f_(out_features) {
  weight_.resize(static_cast<size_t>(out_f_) * in_f_);
  bias_.assign(out_f_, 0.f);
  weight_g_.assign(weight_.size(), 0.f);
  bias_g_.assign(bias_.size(), 0.f);
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_f_));
  for (auto& v : weight_) v = static_cast<float>(init_rng.normal() * stddev);
}

Tensor Linear::forward(const Tensor& x, bool train) {
  if (static_cast<int>(x.sample_size()) != in_f_)
    throw DimensionError(name_ + ": feature mismatch");
  Tensor y(x.n, out_f_, 1, 1);
  CMapRow X(x.v.data(), x.n, in_f_);
  CMapRow W(weight_.data(), out_f_, in_f_);
  MapRow Y(y.v.data(), x.n, out_f_);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias_.data(), out_f_);
  if (train) cached_in_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& grad_out, bool param_grads) {
  const Tensor& x = cached_in_;
  if (x.n != grad_out.n) throw DimensionError(name_ + ": stale cache");
  CMapRow G(grad_out.v.data(), grad_out.n, out_f_);
  CMapRow X(x.v.data(), x.n, in_f_);
  CMapRow W(weight_.data(), out_f_, in_f_);
  if (param_grads) {
    MapRow gW(weight_g_.data(), out_f_, in_f_);
    gW.noalias() += G.transpose() * X;
    // fixed-order scalar reduction; see Conv2d::backward
    for (int o = 0; o < out_f_; ++o) {
      float acc = 0.f;
      for (int r = 0; r < grad_out.n; ++r)
        acc += grad_out.v[static_cast<size_t>(r) * out_f_ + o];
      bias_g_[static_cast<size_t>(o)] += acc;
    }
  }
  Tensor gx(x.n, x.c, x.h, x.w);
  MapRow gX(gx.v.data(), x.n, in_f_);
  gX.noalias() = G * W;
  return gx;
}

std::vector<ParamRef> Linear::params() {
  return {{name_ + ".weight", &weight_, &weight_g_},
          {name_ + ".bias", &bias_, &bias_g_}};
}

// --- shape utilities -------------------------------------------------------

Tensor Flatten::forward(const Tensor& x, bool train) {
  if (train) {
    c_ = x.c;
    h_ = x.h;
    w_ = x.w;
  }
  Tensor y = x;
  y.c = x.c * x.h * x.w;
  y.h = y.w = 1;
  return y;
}

Tensor Flatten::backward(const Tensor& grad_out, bool) {
  Tensor gx = grad_out;
  gx.c = c_;
  gx.h = h_;
  gx.w = w_;
  return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, bool train) {
  if (train) {
    h_ = x.h;
    w_ = x.w;
  }
  Tensor y(x.n, x.c, 1, 1);
  const float inv = 1.0f / static_cast<float>(x.h * x.w);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      const float* plane =
          x.v.data() + (static_cast<size_t>(i) * x.c + ch) * x.h * x.w;
      float acc = 0.f;
      for (int j = 0; j < x.h * x.w; ++j) acc += plane[j];
      y.at(i, ch, 0, 0) = acc * inv;
    }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, bool) {
  Tensor gx(grad_out.n, grad_out.c, h_, w_);
  const float inv = 1.0f / static_cast<float>(h_ * w_);
  for (int i = 0; i < grad_out.n; ++i)
    for (int ch = 0; ch < grad_out.c; ++ch) {
      const float g = grad_out.at(i, ch, 0, 0) * inv;
      float* plane =
          gx.v.data() + (static_cast<size_t>(i) * gx.c + ch) * h_ * w_;
      for (int j = 0; j < h_ * w_; ++j) plane[j] = g;
    }
  return gx;
}

// --- residual & mask -------------------------------------------------------

Residual::Residual(std::string name, std::vector<std::unique_ptr<Layer>> body)
    : name_(std::move(name)), body_(std::move(body)) {}

Tensor Residual::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (auto& layer : body_) y = layer->forward(y, train);
  if (!y.same_shape(x)) throw DimensionError(name_ + ": skip shape mismatch");
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += x.v[i];
  return y;
}

Tensor Residual::backward(const Tensor& grad_out, bool param_grads) {
  Tensor g = grad_out;
  for (auto it = body_.rbegin(); it != body_.rend(); ++it)
    g = (*it)->backward(g, param_grads);
  for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += grad_out.v[i];
  return g;
}

std::vector<ParamRef> Residual::params() {
  std::vector<ParamRef> out;
  for (auto& layer : body_)
    for (auto& p : layer->params()) {
      p.name = name_ + "." + p.name;
      out.push_back(p);
    }
  return out;
}

ChannelMask::ChannelMask(std::string name, int channels)
    : name_(std::move(name)), mask_(channels, 1.f) {}

Tensor ChannelMask::forward(const Tensor& x, bool) {
  if (x.c != channels()) throw DimensionError(name_ + ": channel mismatch");
  Tensor y = x;
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch) {
      float* plane =
          y.v.data() + (static_cast<size_t>(i) * y.c + ch) * y.h * y.w;
      for (int j = 0; j < y.h * y.w; ++j) plane[j] *= mask_[ch];
    }
  return y;
}

Tensor ChannelMask::backward(const Tensor& grad_out, bool) {
  Tensor gx = grad_out;
  for (int i = 0; i < gx.n; ++i)
    for (int ch = 0; ch < gx.c; ++ch) {
      float* plane =
          gx.v.data() + (static_cast<size_t>(i) * gx.c + ch) * gx.h * gx.w;
      for (int j = 0; j < gx.h * gx.w; ++j) plane[j] *= mask_[ch];
    }
  return gx;
}

// --- net -------------------------------------------------------------------

Tensor Net::forward(const Tensor& x, bool train) {
  Tensor t = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    t = layers[i]->forward(t, train || capture_cam);
    if (capture_cam && static_cast<int>(i) == cam_layer) cam_activations = t;
  }
  return t;
}

Tensor Net::backward(const Tensor& grad_out, bool param_grads) {
  Tensor g = grad_out;
  for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
    if (capture_cam && i == cam_layer) cam_gradient = g;
    g = layers[i]->backward(g, param_grads);
  }
  return g;
}

std::vector<ParamRef> Net::named_params() {
  std::vector<ParamRef> out;
  for (auto& layer : layers)
    for (auto& p : layer->params()) out.push_back(p);
  return out;
}

void Net::zero_grads() {
  for (auto& p : named_params())
    std::fill(p.grad->begin(), p.grad->end(), 0.f);
}

size_t Net::param_count() {
  size_t n = 0;
  for (auto& p : named_params()) n += p.value->size();
  return n;
}

ChannelMask* Net::channel_mask() {
  for (auto& layer : layers)
    if (auto* m = dynamic_cast<ChannelMask*>(layer.get())) return m;
  return nullptr;
}

Conv2d* Net::last_conv() {
  Conv2d* found = nullptr;
  for (auto& layer : layers)
    if (auto* c = dynamic_cast<Conv2d*>(layer.get())) found = c;
  return found;
}

// --- loss & optimizer ------------------------------------------------------

double softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels, Tensor* grad) {
  if (static_cast<size_t>(logits.n) != labels.size())
    throw DimensionError("label count mismatch");
  const int k = logits.c;
  if (grad) *grad = Tensor(logits.n, k, 1, 1);
  double loss = 0.0;
  for (int i = 0; i < logits.n; ++i) {
    const float* row = logits.sample(i);
    float mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    const double log_denom = std::log(denom);
    const int y = labels[i];
    if (y < 0 || y >= k) throw DimensionError("label out of range");
    loss += log_denom - (row[y] - mx);
    if (grad) {
      float* g = grad->sample(i);
      for (int j = 0; j < k; ++j) {
        const double p = std::exp(static_cast<double>(row[j] - mx)) / denom;
        g[j] = static_cast<float>(p / logits.n);
      }
      g[y] -= 1.0f / static_cast<float>(logits.n);
    }
  }
  return loss / logits.n;
}

std::vector<double> softmax_row(const Tensor& logits, int row) {
  const int k = logits.c;
  const float* r = logits.sample(row);
  float mx = r[0];
  for (int j = 1; j < k; ++j) mx = std::max(mx, r[j]);
  double denom = 0.0;
  std::vector<double> p(k);
  for (int j = 0; j < k; ++j) {
    p[j] = std::exp(static_cast<double>(r[j] - mx));
    denom += p[j];
  }
  for (auto& v : p) v /= denom;
  return p;
}

int argmax_row(const Tensor& logits, int row) {
  const float* r = logits.sample(row);
  int best = 0;
  for (int j = 1; j < logits.c; ++j)
    if (r[j] > r[best]) best = j;
  return best;
}

void Sgd::step(const std::vector<ParamRef>& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (auto& p : params) velocity_.emplace_back(p.value->size(), 0.f);
  }
  for (size_t i = 0; i < params.size(); ++i) {
    auto& w = *params[i].value;
    auto& g = *params[i].grad;
    auto& vel = velocity_[i];
    if (vel.size() != w.size()) throw DimensionError("optimizer state mismatch");
    for (size_t j = 0; j < w.size(); ++j) {
      const float eff = g[j] + static_cast<float>(weight_decay_) * w[j];
      vel[j] = static_cast<float>(momentum_) * vel[j] -
               static_cast<float>(lr) * eff;
      w[j] += vel[j];
    }
  }
}

}  // namespace poisonbench
