#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poisonbench/image.hpp"
#include "poisonbench/rng.hpp"

namespace poisonbench {

// Dense NCHW float tensor. Fully-connected activations use h = w = 1.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.f)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t size() const { return v.size(); }
  size_t sample_size() const { return static_cast<size_t>(c) * h * w; }
  float* sample(int i) { return v.data() + i * sample_size(); }
  const float* sample(int i) const { return v.data() + i * sample_size(); }
  float& at(int i, int ch, int y, int x) {
    return v[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
  }
  float at(int i, int ch, int y, int x) const {
    return v[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
  }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

// Images enter the network scaled to [0,1].
Tensor batch_from_images(const std::vector<const Image*>& images);
Tensor tensor_from_image(const Image& image);

struct ParamRef {
  std::string name;
  std::vector<float>* value = nullptr;
  std::vector<float>* grad = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  // `train` enables caching for backward. `param_grads` gates accumulation
  // into parameter gradients (input-only gradients are enough for attacks).
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& grad_out, bool param_grads) = 0;
  virtual std::vector<ParamRef> params() { return {}; }
  virtual std::string name() const = 0;
};

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int ksize, int pad,
         Rng& init_rng);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  std::vector<ParamRef> params() override;
  std::string name() const override { return name_; }

  int in_ch() const { return in_ch_; }
  int out_ch() const { return out_ch_; }

 private:
  std::string name_;
  int in_ch_, out_ch_, ksize_, pad_;
  std::vector<float> weight_, bias_;        // [out, in*k*k], [out]
  std::vector<float> weight_g_, bias_g_;
  Tensor cached_in_;
};

class ReLU : public Layer {
 public:
  explicit ReLU(std::string name) : name_(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::vector<uint8_t> mask_;
};

class MaxPool2 : public Layer {
 public:
  explicit MaxPool2(std::string name) : name_(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  int in_h_ = 0, in_w_ = 0;
  std::vector<int32_t> argmax_;
};

class Linear : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features, Rng& init_rng);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  std::vector<ParamRef> params() override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  int in_f_, out_f_;
  std::vector<float> weight_, bias_;  // [out, in], [out]
  std::vector<float> weight_g_, bias_g_;
  Tensor cached_in_;
};

class Flatten : public Layer {
 public:
  explicit Flatten(std::string name) : name_(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  int c_ = 0, h_ = 0, w_ = 0;
};

class GlobalAvgPool : public Layer {
 public:
  explicit GlobalAvgPool(std::string name) : name_(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  int h_ = 0, w_ = 0;
};

// Identity skip around a stack of layers; shapes must agree.
class Residual : public Layer {
 public:
  Residual(std::string name, std::vector<std::unique_ptr<Layer>> body);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  std::vector<ParamRef> params() override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::vector<std::unique_ptr<Layer>> body_;
};

// Per-channel multiplicative mask (all ones until a defense edits it).
class ChannelMask : public Layer {
 public:
  ChannelMask(std::string name, int channels);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  std::string name() const override { return name_; }

  std::vector<float>& mask() { return mask_; }
  int channels() const { return static_cast<int>(mask_.size()); }

 private:
  std::string name_;
  std::vector<float> mask_;
  Tensor cached_in_;
};

class Net {
 public:
  Net() = default;
  Net(Net&&) = default;
  Net& operator=(Net&&) = default;
  Net(const Net&) = delete;
  Net& operator=(const Net&) = delete;

  std::vector<std::unique_ptr<Layer>> layers;
  nlohmann::json arch;  // builder echo, serialized alongside weights

  // Index of the layer whose output feeds class-activation maps (the last
  // conv stage's ReLU); -1 when the arch has no spatial feature map.
  int cam_layer = -1;
  bool capture_cam = false;
  Tensor cam_activations, cam_gradient;

  Tensor forward(const Tensor& x, bool train = false);
  // Returns gradient w.r.t. the network input.
  Tensor backward(const Tensor& grad_out, bool param_grads = true);

  std::vector<ParamRef> named_params();
  void zero_grads();
  size_t param_count();

  ChannelMask* channel_mask();  // nullptr when absent
  Conv2d* last_conv();
};

// loss = mean over batch of -log softmax(logits)[label]; also emits
// d(loss)/d(logits). Logits tensor is [n, K, 1, 1].
double softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels, Tensor* grad);
// Row-wise softmax probabilities, numerically stable.
std::vector<double> softmax_row(const Tensor& logits, int row);
int argmax_row(const Tensor& logits, int row);

// Momentum SGD with decoupled-from-nothing classic weight decay
// (grad += wd * w before the velocity update).
class Sgd {
 public:
  Sgd(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}
  // The param list must be the same (order and shapes) on every call.
  void step(const std::vector<ParamRef>& params, double lr);

 private:
  double momentum_, weight_decay_;
  std::vector<std::vector<float>> velocity_;
};

}  // namespace poisonbench
