#include "sosr/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace sosr {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t parse_size(const std::string& tok, const std::string& item) {
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size() || v <= 0) throw InvalidInput("");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw InvalidInput("bad number '" + tok + "' in layer '" + item + "'");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string describe(const LayerSpec& layer) {
  return std::visit(
      Overloaded{
          [](const DenseSpec& d) {
            return "dense(" + std::to_string(d.in) + "," + std::to_string(d.out) + ")";
          },
          [](const Conv2dSpec& c) {
            return "conv2d(" + std::to_string(c.in_channels) + "," +
                   std::to_string(c.out_channels) + ",k" + std::to_string(c.kernel) + ",s" +
                   std::to_string(c.stride) + ",p" + std::to_string(c.pad) + ")";
          },
          [](const ReluSpec&) { return std::string("relu"); },
          [](const MaxPool2dSpec& p) { return "max_pool2d(" + std::to_string(p.size) + ")"; },
          [](const FlattenSpec&) { return std::string("flatten"); },
      },
      layer);
}

Shape output_shape(const LayerSpec& layer, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const DenseSpec& d) -> Shape {
            if (in.size() != 1) throw InvalidInput("dense expects a flat input");
            if (in[0] != d.in) throw InvalidInput("dense input width mismatch");
            if (d.out == 0) throw InvalidInput("dense output width is zero");
            return {d.out};
          },
          [&](const Conv2dSpec& c) -> Shape {
            if (in.size() != 3) throw InvalidInput("conv2d expects a CxHxW input");
            if (in[0] != c.in_channels) throw InvalidInput("conv2d channel mismatch");
            if (c.kernel == 0 || c.stride == 0 || c.out_channels == 0) {
              throw InvalidInput("conv2d has a zero-sized parameter");
            }
            if (in[1] + 2 * c.pad < c.kernel || in[2] + 2 * c.pad < c.kernel) {
              throw InvalidInput("conv2d kernel larger than padded input");
            }
            return {c.out_channels, (in[1] + 2 * c.pad - c.kernel) / c.stride + 1,
                    (in[2] + 2 * c.pad - c.kernel) / c.stride + 1};
          },
          [&](const ReluSpec&) -> Shape { return in; },
          [&](const MaxPool2dSpec& p) -> Shape {
            if (in.size() != 3) throw InvalidInput("max_pool2d expects a CxHxW input");
            if (p.size == 0 || in[1] < p.size || in[2] < p.size) {
              throw InvalidInput("max_pool2d window larger than input");
            }
            return {in[0], in[1] / p.size, in[2] / p.size};
          },
          [&](const FlattenSpec&) -> Shape { return {shape_size(in)}; },
      },
      layer);
}

std::vector<LayerSpec> parse_layers(const std::string& text, const Shape& input_shape) {
  std::vector<LayerSpec> layers;
  Shape shape = input_shape;
  for (const auto& raw : split(text, ',')) {
    const std::string item = trim(raw);
    if (item.empty()) continue;
    const auto parts = split(item, ':');
    const std::string& kind = parts[0];
    LayerSpec layer;
    if (kind == "dense" && parts.size() == 2) {
      if (shape.size() != 1) {
        throw InvalidInput("dense layer '" + item + "' needs a flat input; insert flatten");
      }
      layer = DenseSpec{shape[0], parse_size(parts[1], item)};
    } else if (kind == "conv" && parts.size() >= 3 && parts.size() <= 5) {
      if (shape.size() != 3) throw InvalidInput("conv layer '" + item + "' needs a CxHxW input");
      Conv2dSpec c{shape[0], parse_size(parts[1], item), parse_size(parts[2], item), 1, 0};
      if (parts.size() >= 4) c.stride = parse_size(parts[3], item);
      if (parts.size() == 5) c.pad = parts[4] == "0" ? 0 : parse_size(parts[4], item);
      layer = c;
    } else if (kind == "relu" && parts.size() == 1) {
      layer = ReluSpec{};
    } else if (kind == "pool" && parts.size() == 2) {
      layer = MaxPool2dSpec{parse_size(parts[1], item)};
    } else if (kind == "flatten" && parts.size() == 1) {
      layer = FlattenSpec{};
    } else {
      throw InvalidInput("unrecognized layer '" + item + "'");
    }
    shape = output_shape(layer, shape);
    layers.push_back(layer);
  }
  if (layers.empty()) throw InvalidInput("empty layer list");
  return layers;
}

std::string format_layers(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (const auto& layer : layers) {
    if (!out.empty()) out += ",";
    out += std::visit(
        Overloaded{
            [](const DenseSpec& d) { return "dense:" + std::to_string(d.out); },
            [](const Conv2dSpec& c) {
              return "conv:" + std::to_string(c.out_channels) + ":" + std::to_string(c.kernel) +
                     ":" + std::to_string(c.stride) + ":" + std::to_string(c.pad);
            },
            [](const ReluSpec&) { return std::string("relu"); },
            [](const MaxPool2dSpec& p) { return "pool:" + std::to_string(p.size); },
            [](const FlattenSpec&) { return std::string("flatten"); },
        },
        layer);
  }
  return out;
}

template <typename T>
Model<T> Model<T>::zeros(std::vector<LayerSpec> layers, Shape input_shape) {
  Model m;
  m.layers_ = std::move(layers);
  m.input_shape_ = std::move(input_shape);
  Shape shape = m.input_shape_;
  for (std::size_t i = 0; i < m.layers_.size(); ++i) {
    try {
      const Shape next = output_shape(m.layers_[i], shape);
      m.param_slot_.push_back(-1);
      if (const auto* d = std::get_if<DenseSpec>(&m.layers_[i])) {
        m.param_slot_.back() = static_cast<int>(m.params_.size());
        m.params_.push_back({Tensor<T>({d->out, d->in}), Tensor<T>({d->out, d->in})});
        m.params_.push_back({Tensor<T>({d->out}), Tensor<T>({d->out})});
      } else if (const auto* c = std::get_if<Conv2dSpec>(&m.layers_[i])) {
        m.param_slot_.back() = static_cast<int>(m.params_.size());
        const Shape w{c->out_channels, c->in_channels, c->kernel, c->kernel};
        m.params_.push_back({Tensor<T>(w), Tensor<T>(w)});
        m.params_.push_back({Tensor<T>({c->out_channels}), Tensor<T>({c->out_channels})});
      }
      shape = next;
    } catch (const InvalidInput& e) {
      const std::string prev =
          i == 0 ? "input " + shape_string(m.input_shape_)
                 : "layer " + std::to_string(i - 1) + " " + describe(m.layers_[i - 1]);
      throw InvalidInput("layer " + std::to_string(i) + " " + describe(m.layers_[i]) +
                         " cannot follow " + prev + " producing " + shape_string(shape) + ": " +
                         e.what());
    }
  }
  return m;
}

template <typename T>
Model<T> Model<T>::build(std::vector<LayerSpec> layers, Shape input_shape, std::uint64_t seed) {
  Model m = zeros(std::move(layers), std::move(input_shape));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m.layers_.size(); ++i) {
    if (m.param_slot_[i] < 0) continue;
    auto& weight = m.params_[m.param_slot_[i]].value;
    const std::size_t fan_in = weight.size() / weight.dim(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> draw(-bound, bound);
    for (auto& w : weight.values()) w = static_cast<T>(draw(rng));
  }
  return m;
}

template <typename T>
Shape Model<T>::shape_after(std::size_t layer_count) const {
  Shape shape = input_shape_;
  for (std::size_t i = 0; i < layer_count && i < layers_.size(); ++i) {
    shape = output_shape(layers_[i], shape);
  }
  return shape;
}

template <typename T>
std::size_t Model<T>::num_outputs() const {
  return shape_size(shape_after(layers_.size()));
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.grad.fill(T{0});
}

template <typename T>
Tensor<T> Model<T>::apply(std::size_t layer, const Tensor<T>& x, Record* record) const {
  const std::size_t batch = x.dim(0);
  Shape in_shape(x.shape().begin() + 1, x.shape().end());
  Shape out_shape = output_shape(layers_[layer], in_shape);
  out_shape.insert(out_shape.begin(), batch);
  Tensor<T> y(out_shape);

  std::visit(
      Overloaded{
          [&](const DenseSpec& d) {
            const auto& w = params_[param_slot_[layer]].value;
            const auto& b = params_[param_slot_[layer] + 1].value;
            for (std::size_t n = 0; n < batch; ++n) {
              const T* xin = x.data() + n * d.in;
              T* yout = y.data() + n * d.out;
              for (std::size_t o = 0; o < d.out; ++o) {
                const T* wr = w.data() + o * d.in;
                T acc = b[o];
                for (std::size_t i = 0; i < d.in; ++i) acc += wr[i] * xin[i];
                yout[o] = acc;
              }
            }
          },
          [&](const Conv2dSpec& c) {
            const auto& w = params_[param_slot_[layer]].value;
            const auto& b = params_[param_slot_[layer] + 1].value;
            const std::size_t h = in_shape[1], wd = in_shape[2];
            const std::size_t oh = out_shape[2], ow = out_shape[3];
            for (std::size_t n = 0; n < batch; ++n) {
              for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
                for (std::size_t r = 0; r < oh; ++r) {
                  for (std::size_t s = 0; s < ow; ++s) {
                    T acc = b[oc];
                    for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
                      for (std::size_t kr = 0; kr < c.kernel; ++kr) {
                        const long ir = static_cast<long>(r * c.stride + kr) - static_cast<long>(c.pad);
                        if (ir < 0 || ir >= static_cast<long>(h)) continue;
                        for (std::size_t kc = 0; kc < c.kernel; ++kc) {
                          const long icl =
                              static_cast<long>(s * c.stride + kc) - static_cast<long>(c.pad);
                          if (icl < 0 || icl >= static_cast<long>(wd)) continue;
                          acc += w[((oc * c.in_channels + ic) * c.kernel + kr) * c.kernel + kc] *
                                 x[((n * c.in_channels + ic) * h + ir) * wd + icl];
                        }
                      }
                    }
                    y[((n * c.out_channels + oc) * oh + r) * ow + s] = acc;
                  }
                }
              }
            }
          },
          [&](const ReluSpec&) {
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
          },
          [&](const MaxPool2dSpec& p) {
            const std::size_t ch = in_shape[0], h = in_shape[1], wd = in_shape[2];
            const std::size_t oh = out_shape[2], ow = out_shape[3];
            if (record) record->pool_index.assign(y.size(), 0);
            for (std::size_t n = 0; n < batch; ++n) {
              for (std::size_t c = 0; c < ch; ++c) {
                const std::size_t plane = (n * ch + c) * h * wd;
                for (std::size_t r = 0; r < oh; ++r) {
                  for (std::size_t s = 0; s < ow; ++s) {
                    std::size_t best = plane + (r * p.size) * wd + s * p.size;
                    for (std::size_t a = 0; a < p.size; ++a) {
                      for (std::size_t bcol = 0; bcol < p.size; ++bcol) {
                        const std::size_t idx = plane + (r * p.size + a) * wd + s * p.size + bcol;
                        if (x[idx] > x[best]) best = idx;
                      }
                    }
                    const std::size_t out_idx = ((n * ch + c) * oh + r) * ow + s;
                    y[out_idx] = x[best];
                    if (record) record->pool_index[out_idx] = best;
                  }
                }
              }
            }
          },
          [&](const FlattenSpec&) { y.values() = x.values(); },
      },
      layers_[layer]);
  return y;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& input, bool record) {
  tape_.clear();
  Shape expected = input_shape_;
  if (input.rank() != expected.size() + 1 ||
      !std::equal(expected.begin(), expected.end(), input.shape().begin() + 1)) {
    throw InvalidInput("input shape " + shape_string(input.shape()) + " does not match model input " +
                       shape_string(input_shape_));
  }
  Tensor<T> x = input;
  std::vector<Record> tape;
  if (record) tape.reserve(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (record) {
      tape.push_back({x, {}});
      x = apply(i, x, &tape.back());
    } else {
      x = apply(i, x, nullptr);
    }
  }
  if (record) tape_ = std::move(tape);
  return x;
}

template <typename T>
Tensor<T> Model<T>::infer(const Tensor<T>& input, std::size_t layer_count) const {
  if (input.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), input.shape().begin() + 1)) {
    throw InvalidInput("input shape " + shape_string(input.shape()) + " does not match model input " +
                       shape_string(input_shape_));
  }
  Tensor<T> x = input;
  for (std::size_t i = 0; i < layer_count && i < layers_.size(); ++i) x = apply(i, x, nullptr);
  return x;
}

template <typename T>
Tensor<T> Model<T>::apply_backward(std::size_t layer, const Tensor<T>& gy, const Record& rec) {
  const Tensor<T>& x = rec.input;
  const std::size_t batch = x.dim(0);
  Tensor<T> gx(x.shape());

  std::visit(
      Overloaded{
          [&](const DenseSpec& d) {
            const auto& w = params_[param_slot_[layer]].value;
            auto& gw = params_[param_slot_[layer]].grad;
            auto& gb = params_[param_slot_[layer] + 1].grad;
            for (std::size_t n = 0; n < batch; ++n) {
              const T* xin = x.data() + n * d.in;
              const T* g = gy.data() + n * d.out;
              T* gxin = gx.data() + n * d.in;
              for (std::size_t o = 0; o < d.out; ++o) {
                const T go = g[o];
                if (go == T{0}) continue;
                gb[o] += go;
                T* gwr = gw.data() + o * d.in;
                const T* wr = w.data() + o * d.in;
                for (std::size_t i = 0; i < d.in; ++i) {
                  gwr[i] += go * xin[i];
                  gxin[i] += go * wr[i];
                }
              }
            }
          },
          [&](const Conv2dSpec& c) {
            const auto& w = params_[param_slot_[layer]].value;
            auto& gw = params_[param_slot_[layer]].grad;
            auto& gb = params_[param_slot_[layer] + 1].grad;
            const std::size_t h = x.dim(2), wd = x.dim(3);
            const std::size_t oh = gy.dim(2), ow = gy.dim(3);
            for (std::size_t n = 0; n < batch; ++n) {
              for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
                for (std::size_t r = 0; r < oh; ++r) {
                  for (std::size_t s = 0; s < ow; ++s) {
                    const T go = gy[((n * c.out_channels + oc) * oh + r) * ow + s];
                    if (go == T{0}) continue;
                    gb[oc] += go;
                    for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
                      for (std::size_t kr = 0; kr < c.kernel; ++kr) {
                        const long ir = static_cast<long>(r * c.stride + kr) - static_cast<long>(c.pad);
                        if (ir < 0 || ir >= static_cast<long>(h)) continue;
                        for (std::size_t kc = 0; kc < c.kernel; ++kc) {
                          const long icl =
                              static_cast<long>(s * c.stride + kc) - static_cast<long>(c.pad);
                          if (icl < 0 || icl >= static_cast<long>(wd)) continue;
                          const std::size_t widx =
                              ((oc * c.in_channels + ic) * c.kernel + kr) * c.kernel + kc;
                          const std::size_t xidx = ((n * c.in_channels + ic) * h + ir) * wd + icl;
                          gw[widx] += go * x[xidx];
                          gx[xidx] += go * w[widx];
                        }
                      }
                    }
                  }
                }
              }
            }
          },
          [&](const ReluSpec&) {
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > T{0} ? gy[i] : T{0};
          },
          [&](const MaxPool2dSpec&) {
            for (std::size_t i = 0; i < gy.size(); ++i) gx[rec.pool_index[i]] += gy[i];
          },
          [&](const FlattenSpec&) { gx.values() = gy.values(); },
      },
      layers_[layer]);
  return gx;
}

template <typename T>
void Model<T>::backward(const Matrix& grad_logits) {
  if (tape_.empty()) throw StateError("backward called without a recorded forward pass");
  const std::size_t batch = tape_.front().input.dim(0);
  if (grad_logits.rows() != batch || grad_logits.cols() != num_outputs()) {
    throw InvalidInput("logit gradient shape does not match the recorded batch");
  }
  zero_grad();
  Tensor<T> g({batch, grad_logits.cols()});
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<T>(grad_logits.data()[i]);
  Shape out = shape_after(layers_.size());
  out.insert(out.begin(), batch);
  g.reshape(out);
  for (std::size_t i = layers_.size(); i-- > 0;) g = apply_backward(i, g, tape_[i]);
}

template class Model<float>;
template class Model<double>;

}  // namespace sosr
