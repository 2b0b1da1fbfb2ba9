#include "flsim/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace flsim {
namespace {

std::vector<double> softmax_row(const double* logits, int n, double temperature) {
  double m = logits[0] / temperature;
  for (int j = 1; j < n; ++j) m = std::max(m, logits[j] / temperature);
  std::vector<double> p(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    p[static_cast<std::size_t>(j)] = std::exp(logits[j] / temperature - m);
    sum += p[static_cast<std::size_t>(j)];
  }
  for (auto& x : p) x /= sum;
  return p;
}

double log_sum_exp(const double* logits, int n) {
  double m = logits[0];
  for (int j = 1; j < n; ++j) m = std::max(m, logits[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) sum += std::exp(logits[j] - m);
  return m + std::log(sum);
}

std::vector<double> widen(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace

ModelSpec make_default_cnn(std::vector<int> input_shape, int num_classes) {
  ModelSpec spec;
  spec.input_shape = std::move(input_shape);
  spec.num_classes = num_classes;
  spec.layers = {Conv2dSpec{16, 5, 5, 1}, ReluSpec{}, MaxPoolSpec{2},
                 Conv2dSpec{32, 5, 5, 1}, ReluSpec{}, MaxPoolSpec{2},
                 FlattenSpec{},           DenseSpec{128}, ReluSpec{},
                 DenseSpec{num_classes}};
  return spec;
}

bool layouts_compatible(const ParamLayout& a, const ParamLayout& b) {
  if (a.total_count != b.total_count || a.segments.size() != b.segments.size()) return false;
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    const auto& sa = a.segments[i];
    const auto& sb = b.segments[i];
    if (sa.layer_index != sb.layer_index || sa.role != sb.role || sa.shape != sb.shape ||
        sa.offset != sb.offset || sa.count != sb.count) {
      return false;
    }
  }
  return true;
}

Network::Network(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.num_classes < 2) throw std::invalid_argument("Network: num_classes must be >= 2");
  if (spec_.layers.empty()) throw std::invalid_argument("Network: model has no layers");
  shape_volume(spec_.input_shape);  // validates dims

  auto layout = std::make_shared<ParamLayout>();
  shapes_.push_back(spec_.input_shape);
  weight_segment_.assign(spec_.layers.size(), -1);
  bias_segment_.assign(spec_.layers.size(), -1);

  auto add_segment = [&](int li, const char* role, std::vector<int> shape) {
    ParamSegment seg;
    seg.layer_index = li;
    seg.role = role;
    seg.count = shape_volume(shape);
    seg.shape = std::move(shape);
    seg.offset = layout->total_count;
    layout->total_count += seg.count;
    layout->segments.push_back(std::move(seg));
    return static_cast<int>(layout->segments.size()) - 1;
  };

  for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
    const auto& in = shapes_.back();
    const auto fail = [&](const std::string& msg) {
      throw std::invalid_argument("Network: layer " + std::to_string(li) + ": " + msg +
                                  " (input shape " + shape_to_string(in) + ")");
    };
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2dSpec>) {
            if (in.size() != 3) fail("conv requires [C,H,W] input");
            if (l.out_channels < 1 || l.kernel_h < 1 || l.kernel_w < 1 || l.stride < 1)
              fail("conv parameters must be positive");
            if (in[1] < l.kernel_h || in[2] < l.kernel_w) fail("kernel larger than input");
            int oh = (in[1] - l.kernel_h) / l.stride + 1;
            int ow = (in[2] - l.kernel_w) / l.stride + 1;
            weight_segment_[li] = add_segment(static_cast<int>(li), "weight",
                                              {l.out_channels, in[0], l.kernel_h, l.kernel_w});
            bias_segment_[li] = add_segment(static_cast<int>(li), "bias", {l.out_channels});
            shapes_.push_back({l.out_channels, oh, ow});
          } else if constexpr (std::is_same_v<T, MaxPoolSpec>) {
            if (in.size() != 3) fail("maxpool requires [C,H,W] input");
            if (l.size < 1) fail("pool size must be positive");
            int oh = in[1] / l.size;
            int ow = in[2] / l.size;
            if (oh < 1 || ow < 1) fail("pool window larger than input");
            shapes_.push_back({in[0], oh, ow});
          } else if constexpr (std::is_same_v<T, ReluSpec>) {
            shapes_.push_back(in);
          } else if constexpr (std::is_same_v<T, FlattenSpec>) {
            shapes_.push_back({static_cast<int>(shape_volume(in))});
          } else if constexpr (std::is_same_v<T, DenseSpec>) {
            if (in.size() != 1) fail("dense requires flattened input");
            if (l.out_features < 1) fail("out_features must be positive");
            weight_segment_[li] =
                add_segment(static_cast<int>(li), "weight", {l.out_features, in[0]});
            bias_segment_[li] = add_segment(static_cast<int>(li), "bias", {l.out_features});
            shapes_.push_back({l.out_features});
          }
        },
        spec_.layers[li]);
  }

  const auto& out = shapes_.back();
  if (out.size() != 1 || out[0] != spec_.num_classes) {
    throw std::invalid_argument("Network: final layer emits " + shape_to_string(out) +
                                ", expected [" + std::to_string(spec_.num_classes) + "]");
  }
  layout_ = std::move(layout);
}

const std::vector<int>& Network::activation_shape(std::size_t layer_index) const {
  if (layer_index >= spec_.layers.size())
    throw std::invalid_argument("Network: layer index " + std::to_string(layer_index) +
                                " out of range");
  return shapes_[layer_index + 1];
}

FlatParams Network::zero_params() const {
  FlatParams p;
  p.values.assign(layout_->total_count, 0.0f);
  p.layout = layout_;
  return p;
}

FlatParams Network::init_params(RngStream rng) const {
  FlatParams p = zero_params();
  for (const auto& seg : layout_->segments) {
    double fan_in = 1.0;
    const auto& in = shapes_[static_cast<std::size_t>(seg.layer_index)];
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2dSpec>) {
            fan_in = static_cast<double>(in[0]) * l.kernel_h * l.kernel_w;
          } else if constexpr (std::is_same_v<T, DenseSpec>) {
            fan_in = static_cast<double>(in[0]);
          }
        },
        spec_.layers[static_cast<std::size_t>(seg.layer_index)]);
    double bound = 1.0 / std::sqrt(fan_in);
    for (std::size_t i = 0; i < seg.count; ++i) {
      p.values[seg.offset + i] = static_cast<float>(rng.uniform(-bound, bound));
    }
  }
  return p;
}

void Network::check_params(const FlatParams& params) const {
  if (params.values.size() != layout_->total_count) {
    throw std::invalid_argument("Network: parameter vector has " +
                                std::to_string(params.values.size()) + " values, expected " +
                                std::to_string(layout_->total_count));
  }
}

void Network::check_batch(const LabeledBatch& batch, LossWeights weights) const {
  std::size_t b = batch.inputs.shape.empty() ? 0 : static_cast<std::size_t>(batch.inputs.shape[0]);
  if (batch.labels.size() != b) {
    throw std::invalid_argument("Network: batch has " + std::to_string(b) + " inputs but " +
                                std::to_string(batch.labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    if (batch.labels[i] < 0 || batch.labels[i] >= spec_.num_classes) {
      throw std::invalid_argument("Network: label " + std::to_string(batch.labels[i]) +
                                  " at sample " + std::to_string(i) + " out of range");
    }
  }
  if (weights.ce < 0.0 || weights.kd < 0.0) {
    throw std::invalid_argument("Network: loss weights must be non-negative");
  }
  if (weights.kd > 0.0) {
    if (batch.soft_targets.size() != b) {
      throw std::invalid_argument(
          "Network: KD weight is positive but batch carries no per-sample soft targets");
    }
    for (const auto& t : batch.soft_targets) {
      if (t.size() != static_cast<std::size_t>(spec_.num_classes)) {
        throw std::invalid_argument("Network: soft target length " + std::to_string(t.size()) +
                                    " does not match num_classes");
      }
    }
  }
}

struct Network::Forward {
  std::vector<std::vector<double>> acts;      // acts[0] = input, acts[i+1] = output of layer i
  std::vector<std::vector<int>> pool_argmax;  // absolute input index per pooled cell
  int batch = 0;
};

Network::Forward Network::run_forward(const FlatParams& params, const DenseTensor& batch,
                                      bool capture) const {
  check_params(params);
  const auto& in_shape = spec_.input_shape;
  bool shape_ok = batch.shape.size() == in_shape.size() + 1 && !batch.shape.empty() &&
                  batch.shape[0] >= 1 &&
                  std::equal(in_shape.begin(), in_shape.end(), batch.shape.begin() + 1);
  if (!shape_ok) {
    throw std::invalid_argument("Network: batch shape " + shape_to_string(batch.shape) +
                                " does not match [B," +
                                shape_to_string(in_shape).substr(1));
  }

  Forward fw;
  fw.batch = batch.shape[0];
  const int B = fw.batch;
  fw.acts.reserve(spec_.layers.size() + 1);
  fw.acts.push_back(widen(batch.values));
  if (capture) fw.pool_argmax.assign(spec_.layers.size(), {});

  const float* pv = params.values.data();
  for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
    const auto& ishape = shapes_[li];
    const auto& oshape = shapes_[li + 1];
    const std::vector<double>& x = fw.acts.back();
    std::vector<double> y(static_cast<std::size_t>(B) * shape_volume(oshape));
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2dSpec>) {
            const int IC = ishape[0], IH = ishape[1], IW = ishape[2];
            const int OC = oshape[0], OH = oshape[1], OW = oshape[2];
            const int KH = l.kernel_h, KW = l.kernel_w, S = l.stride;
            const float* w = pv + layout_->segments[weight_segment_[li]].offset;
            const float* bias = pv + layout_->segments[bias_segment_[li]].offset;
            for (int b = 0; b < B; ++b) {
              const double* xin = x.data() + static_cast<std::size_t>(b) * IC * IH * IW;
              double* yout = y.data() + static_cast<std::size_t>(b) * OC * OH * OW;
              for (int oc = 0; oc < OC; ++oc) {
                for (int oy = 0; oy < OH; ++oy) {
                  for (int ox = 0; ox < OW; ++ox) {
                    double acc = bias[oc];
                    for (int ic = 0; ic < IC; ++ic) {
                      for (int ky = 0; ky < KH; ++ky) {
                        const double* xrow = xin + (static_cast<std::size_t>(ic) * IH +
                                                    (oy * S + ky)) * IW + ox * S;
                        const float* wrow =
                            w + ((static_cast<std::size_t>(oc) * IC + ic) * KH + ky) * KW;
                        for (int kx = 0; kx < KW; ++kx) acc += xrow[kx] * wrow[kx];
                      }
                    }
                    yout[(static_cast<std::size_t>(oc) * OH + oy) * OW + ox] = acc;
                  }
                }
              }
            }
          } else if constexpr (std::is_same_v<T, MaxPoolSpec>) {
            const int C = ishape[0], IH = ishape[1], IW = ishape[2];
            const int OH = oshape[1], OW = oshape[2];
            const int S = l.size;
            std::vector<int>* argmax = capture ? &fw.pool_argmax[li] : nullptr;
            if (argmax) argmax->assign(y.size(), 0);
            for (int b = 0; b < B; ++b) {
              const std::size_t xbase = static_cast<std::size_t>(b) * C * IH * IW;
              const std::size_t ybase = static_cast<std::size_t>(b) * C * OH * OW;
              for (int c = 0; c < C; ++c) {
                for (int oy = 0; oy < OH; ++oy) {
                  for (int ox = 0; ox < OW; ++ox) {
                    // first max in (ky,kx) scan order wins ties
                    std::size_t best = xbase + (static_cast<std::size_t>(c) * IH + oy * S) * IW +
                                       static_cast<std::size_t>(ox) * S;
                    double bv = x[best];
                    for (int ky = 0; ky < S; ++ky) {
                      for (int kx = 0; kx < S; ++kx) {
                        std::size_t idx = xbase +
                                          (static_cast<std::size_t>(c) * IH + (oy * S + ky)) * IW +
                                          static_cast<std::size_t>(ox * S + kx);
                        if (x[idx] > bv) {
                          bv = x[idx];
                          best = idx;
                        }
                      }
                    }
                    std::size_t oidx = ybase + (static_cast<std::size_t>(c) * OH + oy) * OW + ox;
                    y[oidx] = bv;
                    if (argmax) (*argmax)[oidx] = static_cast<int>(best);
                  }
                }
              }
            }
          } else if constexpr (std::is_same_v<T, ReluSpec>) {
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
          } else if constexpr (std::is_same_v<T, FlattenSpec>) {
            y = x;
          } else if constexpr (std::is_same_v<T, DenseSpec>) {
            const int I = ishape[0], O = oshape[0];
            const float* w = pv + layout_->segments[weight_segment_[li]].offset;
            const float* bias = pv + layout_->segments[bias_segment_[li]].offset;
            for (int b = 0; b < B; ++b) {
              const double* xin = x.data() + static_cast<std::size_t>(b) * I;
              double* yout = y.data() + static_cast<std::size_t>(b) * O;
              for (int o = 0; o < O; ++o) {
                double acc = bias[o];
                const float* wrow = w + static_cast<std::size_t>(o) * I;
                for (int i = 0; i < I; ++i) acc += wrow[i] * xin[i];
                yout[o] = acc;
              }
            }
          }
        },
        spec_.layers[li]);
    fw.acts.push_back(std::move(y));
  }
  return fw;
}

DenseTensor Network::forward(const FlatParams& params, const DenseTensor& batch) const {
  Forward fw = run_forward(params, batch, false);
  const auto& logits = fw.acts.back();
  DenseTensor out;
  out.shape = {fw.batch, spec_.num_classes};
  out.values.assign(logits.begin(), logits.end());
  ensure_finite(out.values, "Network::forward logits");
  return out;
}

std::vector<DenseTensor> Network::forward_activations(const FlatParams& params,
                                                      const DenseTensor& batch) const {
  Forward fw = run_forward(params, batch, false);
  std::vector<DenseTensor> out;
  out.reserve(spec_.layers.size());
  for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
    DenseTensor t;
    t.shape.push_back(fw.batch);
    for (int d : shapes_[li + 1]) t.shape.push_back(d);
    t.values.assign(fw.acts[li + 1].begin(), fw.acts[li + 1].end());
    out.push_back(std::move(t));
  }
  return out;
}

double Network::loss(const FlatParams& params, const LabeledBatch& batch, LossWeights weights,
                     double temperature) const {
  check_batch(batch, weights);
  if (weights.kd > 0.0 && !(temperature > 0.0)) {
    throw std::invalid_argument("Network: temperature must be positive when KD weight > 0");
  }
  Forward fw = run_forward(params, batch.inputs, false);
  const int B = fw.batch;
  const int C = spec_.num_classes;
  const std::vector<double>& logits = fw.acts.back();

  double ce_sum = 0.0;
  double kd_sum = 0.0;
  for (int b = 0; b < B; ++b) {
    const double* row = logits.data() + static_cast<std::size_t>(b) * C;
    if (weights.ce > 0.0) {
      ce_sum += log_sum_exp(row, C) - row[batch.labels[static_cast<std::size_t>(b)]];
    }
    if (weights.kd > 0.0) {
      std::vector<double> t = widen(batch.soft_targets[static_cast<std::size_t>(b)]);
      std::vector<double> pt = softmax_row(t.data(), C, temperature);
      std::vector<double> ps = softmax_row(row, C, temperature);
      double kl = 0.0;
      for (int j = 0; j < C; ++j) {
        if (pt[static_cast<std::size_t>(j)] > 0.0) {
          kl += pt[static_cast<std::size_t>(j)] *
                (std::log(pt[static_cast<std::size_t>(j)]) -
                 std::log(ps[static_cast<std::size_t>(j)]));
        }
      }
      kd_sum += kl * temperature * temperature;
    }
  }
  return weights.ce * ce_sum / B + weights.kd * kd_sum / B;
}

FlatUpdate Network::gradient(const FlatParams& params, const LabeledBatch& batch,
                             LossWeights weights, double temperature) const {
  check_batch(batch, weights);
  if (weights.kd > 0.0 && !(temperature > 0.0)) {
    throw std::invalid_argument("Network: temperature must be positive when KD weight > 0");
  }
  Forward fw = run_forward(params, batch.inputs, true);
  const int B = fw.batch;
  const int C = spec_.num_classes;

  std::vector<double> grad(layout_->total_count, 0.0);
  std::vector<double> delta(static_cast<std::size_t>(B) * C, 0.0);
  {
    const std::vector<double>& logits = fw.acts.back();
    for (int b = 0; b < B; ++b) {
      const double* row = logits.data() + static_cast<std::size_t>(b) * C;
      double* drow = delta.data() + static_cast<std::size_t>(b) * C;
      if (weights.ce > 0.0) {
        std::vector<double> p = softmax_row(row, C, 1.0);
        for (int j = 0; j < C; ++j) drow[j] += weights.ce / B * p[static_cast<std::size_t>(j)];
        drow[batch.labels[static_cast<std::size_t>(b)]] -= weights.ce / B;
      }
      if (weights.kd > 0.0) {
        std::vector<double> t = widen(batch.soft_targets[static_cast<std::size_t>(b)]);
        std::vector<double> pt = softmax_row(t.data(), C, temperature);
        std::vector<double> ps = softmax_row(row, C, temperature);
        // d/dl [ KL(pt || softmax(l/T)) * T^2 ] = T * (softmax(l/T) - pt)
        for (int j = 0; j < C; ++j) {
          drow[j] += weights.kd / B * temperature *
                     (ps[static_cast<std::size_t>(j)] - pt[static_cast<std::size_t>(j)]);
        }
      }
    }
  }

  const float* pv = params.values.data();
  for (int lis = static_cast<int>(spec_.layers.size()) - 1; lis >= 0; --lis) {
    const std::size_t li = static_cast<std::size_t>(lis);
    const auto& ishape = shapes_[li];
    const auto& oshape = shapes_[li + 1];
    const std::vector<double>& x = fw.acts[li];
    std::vector<double> dx(x.size(), 0.0);
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2dSpec>) {
            const int IC = ishape[0], IH = ishape[1], IW = ishape[2];
            const int OC = oshape[0], OH = oshape[1], OW = oshape[2];
            const int KH = l.kernel_h, KW = l.kernel_w, S = l.stride;
            const auto& wseg = layout_->segments[weight_segment_[li]];
            const auto& bseg = layout_->segments[bias_segment_[li]];
            const float* w = pv + wseg.offset;
            double* dw = grad.data() + wseg.offset;
            double* db = grad.data() + bseg.offset;
            for (int b = 0; b < B; ++b) {
              const double* xin = x.data() + static_cast<std::size_t>(b) * IC * IH * IW;
              double* dxin = dx.data() + static_cast<std::size_t>(b) * IC * IH * IW;
              const double* dout = delta.data() + static_cast<std::size_t>(b) * OC * OH * OW;
              for (int oc = 0; oc < OC; ++oc) {
                for (int oy = 0; oy < OH; ++oy) {
                  for (int ox = 0; ox < OW; ++ox) {
                    double g = dout[(static_cast<std::size_t>(oc) * OH + oy) * OW + ox];
                    if (g == 0.0) continue;
                    db[oc] += g;
                    for (int ic = 0; ic < IC; ++ic) {
                      for (int ky = 0; ky < KH; ++ky) {
                        const std::size_t xoff = (static_cast<std::size_t>(ic) * IH +
                                                  (oy * S + ky)) * IW + ox * S;
                        const std::size_t woff =
                            ((static_cast<std::size_t>(oc) * IC + ic) * KH + ky) * KW;
                        for (int kx = 0; kx < KW; ++kx) {
                          dw[woff + kx] += g * xin[xoff + kx];
                          dxin[xoff + kx] += g * w[woff + kx];
                        }
                      }
                    }
                  }
                }
              }
            }
          } else if constexpr (std::is_same_v<T, MaxPoolSpec>) {
            const std::vector<int>& argmax = fw.pool_argmax[li];
            for (std::size_t i = 0; i < delta.size(); ++i) {
              dx[static_cast<std::size_t>(argmax[i])] += delta[i];
            }
          } else if constexpr (std::is_same_v<T, ReluSpec>) {
            for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? delta[i] : 0.0;
          } else if constexpr (std::is_same_v<T, FlattenSpec>) {
            dx = delta;
          } else if constexpr (std::is_same_v<T, DenseSpec>) {
            const int I = ishape[0], O = oshape[0];
            const auto& wseg = layout_->segments[weight_segment_[li]];
            const auto& bseg = layout_->segments[bias_segment_[li]];
            const float* w = pv + wseg.offset;
            double* dw = grad.data() + wseg.offset;
            double* db = grad.data() + bseg.offset;
            for (int b = 0; b < B; ++b) {
              const double* xin = x.data() + static_cast<std::size_t>(b) * I;
              double* dxin = dx.data() + static_cast<std::size_t>(b) * I;
              const double* dout = delta.data() + static_cast<std::size_t>(b) * O;
              for (int o = 0; o < O; ++o) {
                double g = dout[o];
                if (g == 0.0) continue;
                db[o] += g;
                const float* wrow = w + static_cast<std::size_t>(o) * I;
                double* dwrow = dw + static_cast<std::size_t>(o) * I;
                for (int i = 0; i < I; ++i) {
                  dwrow[i] += g * xin[i];
                  dxin[i] += g * wrow[i];
                }
              }
            }
          }
        },
        spec_.layers[li]);
    delta = std::move(dx);
  }

  ensure_finite(grad, "Network::gradient");
  FlatUpdate out;
  out.values.assign(grad.begin(), grad.end());
  return out;
}

double cross_entropy(const DenseTensor& logits, const std::vector<int>& labels) {
  if (logits.shape.size() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be [B,C], got " +
                                shape_to_string(logits.shape));
  }
  const int B = logits.shape[0], C = logits.shape[1];
  if (labels.size() != static_cast<std::size_t>(B)) {
    throw std::invalid_argument("cross_entropy: label count does not match batch");
  }
  double sum = 0.0;
  for (int b = 0; b < B; ++b) {
    int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= C) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    std::vector<double> row(logits.values.begin() + static_cast<std::size_t>(b) * C,
                            logits.values.begin() + static_cast<std::size_t>(b + 1) * C);
    sum += log_sum_exp(row.data(), C) - row[static_cast<std::size_t>(y)];
  }
  return sum / B;
}

double kd_loss(const DenseTensor& student_logits, const DenseTensor& teacher_logits,
               double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("kd_loss: temperature must be positive");
  if (student_logits.shape.size() != 2 || teacher_logits.shape != student_logits.shape) {
    throw std::invalid_argument("kd_loss: student/teacher logits must share shape [B,C]");
  }
  const int B = student_logits.shape[0], C = student_logits.shape[1];
  double sum = 0.0;
  for (int b = 0; b < B; ++b) {
    std::vector<double> s(student_logits.values.begin() + static_cast<std::size_t>(b) * C,
                          student_logits.values.begin() + static_cast<std::size_t>(b + 1) * C);
    std::vector<double> t(teacher_logits.values.begin() + static_cast<std::size_t>(b) * C,
                          teacher_logits.values.begin() + static_cast<std::size_t>(b + 1) * C);
    std::vector<double> ps = softmax_row(s.data(), C, temperature);
    std::vector<double> pt = softmax_row(t.data(), C, temperature);
    double kl = 0.0;
    for (int j = 0; j < C; ++j) {
      if (pt[static_cast<std::size_t>(j)] > 0.0) {
        kl += pt[static_cast<std::size_t>(j)] * (std::log(pt[static_cast<std::size_t>(j)]) -
                                                 std::log(ps[static_cast<std::size_t>(j)]));
      }
    }
    sum += kl * temperature * temperature;
  }
  return sum / B;
}

DenseTensor grad_wrt_logits(const DenseTensor& logits, int label) {
  std::size_t c;
  if (logits.shape.size() == 1) {
    c = static_cast<std::size_t>(logits.shape[0]);
  } else if (logits.shape.size() == 2 && logits.shape[0] == 1) {
    c = static_cast<std::size_t>(logits.shape[1]);
  } else {
    throw std::invalid_argument("grad_wrt_logits: expected one sample of logits, got " +
                                shape_to_string(logits.shape));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= c) {
    throw std::invalid_argument("grad_wrt_logits: label out of range");
  }
  std::vector<double> row(logits.values.begin(), logits.values.end());
  std::vector<double> p = softmax_row(row.data(), static_cast<int>(c), 1.0);
  DenseTensor out;
  out.shape = logits.shape;
  out.values.resize(c);
  for (std::size_t j = 0; j < c; ++j) {
    out.values[j] = static_cast<float>(p[j] - (static_cast<std::size_t>(label) == j ? 1.0 : 0.0));
  }
  return out;
}

FlatParams sgd_step(const FlatParams& params, const FlatUpdate& update, double lr) {
  if (lr < 0.0) throw std::invalid_argument("sgd_step: learning rate must be non-negative");
  if (params.values.size() != update.values.size()) {
    throw std::invalid_argument("sgd_step: parameter/update sizes differ (" +
                                std::to_string(params.values.size()) + " vs " +
                                std::to_string(update.values.size()) + ")");
  }
  FlatParams out = params;
  const float flr = static_cast<float>(lr);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] -= flr * update.values[i];
  }
  return out;
}

FlatUpdate finite_diff_gradient(const Network& net, const FlatParams& params,
                                const LabeledBatch& batch, LossWeights weights,
                                double temperature, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_gradient: step must be positive");
  FlatParams work = params;
  FlatUpdate out;
  out.values.resize(params.values.size());
  for (std::size_t i = 0; i < work.values.size(); ++i) {
    const float orig = work.values[i];
    const float up = static_cast<float>(static_cast<double>(orig) + step);
    const float dn = static_cast<float>(static_cast<double>(orig) - step);
    work.values[i] = up;
    double lp = net.loss(work, batch, weights, temperature);
    work.values[i] = dn;
    double lm = net.loss(work, batch, weights, temperature);
    work.values[i] = orig;
    out.values[i] =
        static_cast<float>((lp - lm) / (static_cast<double>(up) - static_cast<double>(dn)));
  }
  return out;
}

std::vector<DenseTensor> unflatten(const FlatParams& params) {
  if (!params.layout) throw std::invalid_argument("unflatten: parameters carry no layout");
  if (params.values.size() != params.layout->total_count) {
    throw std::invalid_argument("unflatten: value count does not match layout");
  }
  std::vector<DenseTensor> out;
  out.reserve(params.layout->segments.size());
  for (const auto& seg : params.layout->segments) {
    DenseTensor t;
    t.shape = seg.shape;
    t.values.assign(params.values.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                    params.values.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.count));
    out.push_back(std::move(t));
  }
  return out;
}

FlatParams flatten(const std::shared_ptr<const ParamLayout>& layout,
                   const std::vector<DenseTensor>& tensors) {
  if (!layout) throw std::invalid_argument("flatten: null layout");
  if (tensors.size() != layout->segments.size()) {
    throw std::invalid_argument("flatten: tensor count does not match layout segments");
  }
  FlatParams out;
  out.layout = layout;
  out.values.assign(layout->total_count, 0.0f);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& seg = layout->segments[i];
    if (tensors[i].shape != seg.shape) {
      throw std::invalid_argument("flatten: tensor " + std::to_string(i) + " shape " +
                                  shape_to_string(tensors[i].shape) + " does not match segment " +
                                  shape_to_string(seg.shape));
    }
    std::copy(tensors[i].values.begin(), tensors[i].values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
  }
  return out;
}

double l2_norm(const std::vector<float>& values) {
  double s = 0.0;
  for (float v : values) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

}  // namespace flsim
