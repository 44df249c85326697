#pragma once

// Network construction: the TutorNet residual family (15/29/43/94) and four
// tiny density-regression mains. A spec is a plain layer list; parameters
// live in a flat ordered vector so init and forward share one traversal
// order (forward verifies shapes as it consumes the cursor).

#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "tutornet/conv.hpp"
#include "tutornet/curriculum.hpp"
#include "tutornet/rng.hpp"
#include "tutornet/tensor.hpp"

namespace tutornet {

struct NetError : std::runtime_error {
  explicit NetError(const std::string& msg) : std::runtime_error(msg) {}
};

// Channel-count scaling that must stay integral.
struct Rational {
  int num = 1;
  int den = 1;

  int apply(int channels) const {
    if (num <= 0 || den <= 0) throw NetError("width multiplier must be positive");
    long long v = static_cast<long long>(channels) * num;
    if (v % den != 0)
      throw NetError("width multiplier " + str() + " does not keep " +
                     std::to_string(channels) + " channels integral");
    return static_cast<int>(v / den);
  }

  std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }
};

inline Rational parse_rational(const std::string& s) {
  Rational r{0, 1};
  auto slash = s.find('/');
  try {
    if (slash == std::string::npos)
      r = Rational{std::stoi(s), 1};
    else
      r = Rational{std::stoi(s.substr(0, slash)), std::stoi(s.substr(slash + 1))};
  } catch (const std::exception&) {
    throw NetError("bad width multiplier '" + s + "', expected N or N/D");
  }
  if (r.num <= 0 || r.den <= 0)
    throw NetError("width multiplier must be positive, got '" + s + "'");
  return r;
}

struct Layer;

struct Conv {
  int out_channels;
  int kernel;
  int stride = 1;
  int padding = 0;
  bool fixed_width = false;  // exempt from the width multiplier (heads)
};
struct MaxPool {
  int k;
  int stride;
};
struct Relu {};
struct Upsample {
  int factor;
};
// Two 3x3 convs per repeat; block stride sits on the first conv of the
// first repeat; 1x1 projection shortcut when channels or stride change.
struct ResidualBasic {
  int channels;
  int repeats;
  int stride;
};
// 1x1 down, 3x3, 1x1 up per repeat; stride on the first 1x1.
struct ResidualBottleneck {
  int mid_channels;
  int out_channels;
  int repeats;
  int stride;
};
// Each layer appends growth channels: y = relu(conv3x3(cat)), cat = [cat, y].
struct DenseBlock {
  int growth;
  int layers;
};
// Parallel branches over the same input, outputs concatenated by channel.
struct Columns {
  std::vector<std::vector<Layer>> branches;
};
// y = concat(x, inner(x)); inner must preserve spatial size overall.
struct SkipConcat {
  std::vector<Layer> inner;
};
enum class FinalKind { weight_activation, relu, none };
struct FinalActivation {
  FinalKind kind = FinalKind::none;
  double t_floor = 0.5;  // weight_activation's easy-pixel floor
};

using LayerVariant = std::variant<Conv, MaxPool, Relu, Upsample, ResidualBasic,
                                  ResidualBottleneck, DenseBlock, Columns, SkipConcat,
                                  FinalActivation>;

struct Layer {
  LayerVariant v;
  template <typename T>
    requires(!std::is_same_v<std::decay_t<T>, Layer> &&
             std::is_constructible_v<LayerVariant, T &&>)
  Layer(T&& t) : v(std::forward<T>(t)) {}
};

namespace detail {
template <typename... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <typename... Fs>
overloaded(Fs...) -> overloaded<Fs...>;
}  // namespace detail

struct NetworkSpec {
  std::string name;
  std::vector<Layer> layers;
  Rational width_multiplier{1, 1};
  int downsampling = 8;
  int in_channels = 3;
};

struct NetworkParams {
  std::vector<Tensor> tensors;  // kernel, bias per conv in traversal order

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const Tensor& t : tensors) n += t.numel();
    return n;
  }
  void zero_grads() {
    for (Tensor& t : tensors) t.zero_grad();
  }
};

namespace detail {

struct ConvSlot {
  int in_c, out_c, k, stride, pad;
};

// Enumerates every conv (including the implicit ones inside blocks) in the
// exact order forward() consumes parameters. Returns the output channels.
inline int plan_convs(const std::vector<Layer>& layers, int in_c, const Rational& wm,
                      std::vector<ConvSlot>& out) {
  for (const Layer& layer : layers) {
    std::visit(
        overloaded{
            [&](const Conv& c) {
              int oc = c.fixed_width ? c.out_channels : wm.apply(c.out_channels);
              out.push_back({in_c, oc, c.kernel, c.stride, c.padding});
              in_c = oc;
            },
            [&](const MaxPool&) {},
            [&](const Relu&) {},
            [&](const Upsample&) {},
            [&](const ResidualBasic& b) {
              int c = wm.apply(b.channels);
              for (int r = 0; r < b.repeats; ++r) {
                int s = r == 0 ? b.stride : 1;
                out.push_back({in_c, c, 3, s, 1});
                out.push_back({c, c, 3, 1, 1});
                if (in_c != c || s != 1) out.push_back({in_c, c, 1, s, 0});
                in_c = c;
              }
            },
            [&](const ResidualBottleneck& b) {
              int m = wm.apply(b.mid_channels);
              int o = wm.apply(b.out_channels);
              for (int r = 0; r < b.repeats; ++r) {
                int s = r == 0 ? b.stride : 1;
                out.push_back({in_c, m, 1, s, 0});
                out.push_back({m, m, 3, 1, 1});
                out.push_back({m, o, 1, 1, 0});
                if (in_c != o || s != 1) out.push_back({in_c, o, 1, s, 0});
                in_c = o;
              }
            },
            [&](const DenseBlock& d) {
              int g = wm.apply(d.growth);
              for (int i = 0; i < d.layers; ++i) {
                out.push_back({in_c, g, 3, 1, 1});
                in_c += g;
              }
            },
            [&](const Columns& c) {
              int total = 0;
              for (const auto& branch : c.branches)
                total += plan_convs(branch, in_c, wm, out);
              in_c = total;
            },
            [&](const SkipConcat& s) { in_c += plan_convs(s.inner, in_c, wm, out); },
            [&](const FinalActivation&) {},
        },
        layer.v);
  }
  return in_c;
}

// Nominal cumulative stride as a fraction (upsampling divides).
inline void stride_fraction(const std::vector<Layer>& layers, long long& num,
                            long long& den) {
  for (const Layer& layer : layers) {
    std::visit(overloaded{
                   [&](const Conv& c) { num *= c.stride; },
                   [&](const MaxPool& p) { num *= p.stride; },
                   [&](const Upsample& u) { den *= u.factor; },
                   [&](const ResidualBasic& b) { num *= b.stride; },
                   [&](const ResidualBottleneck& b) { num *= b.stride; },
                   [&](const Columns& c) {
                     long long n0 = 0, d0 = 0;
                     for (const auto& branch : c.branches) {
                       long long n = 1, d = 1;
                       stride_fraction(branch, n, d);
                       if (n0 == 0) { n0 = n; d0 = d; }
                       else if (n * d0 != n0 * d)
                         throw NetError("column branches disagree on stride");
                     }
                     num *= n0;
                     den *= d0;
                   },
                   [&](const SkipConcat& s) {
                     long long n = 1, d = 1;
                     stride_fraction(s.inner, n, d);
                     if (n != d)
                       throw NetError("skip branch must preserve spatial size");
                   },
                   [&](const auto&) {},
               },
               layer.v);
  }
}

}  // namespace detail

inline void validate_spec(const NetworkSpec& spec) {
  long long num = 1, den = 1;
  detail::stride_fraction(spec.layers, num, den);
  if (den == 0 || num % den != 0 || num / den != spec.downsampling)
    throw NetError(spec.name + ": cumulative stride " + std::to_string(num) + "/" +
                   std::to_string(den) + " != declared downsampling " +
                   std::to_string(spec.downsampling));
  std::vector<detail::ConvSlot> slots;
  detail::plan_convs(spec.layers, spec.in_channels, spec.width_multiplier, slots);
  if (slots.empty()) throw NetError(spec.name + ": no parameters");
}

inline NetworkSpec tutornet_spec(int depth, Rational width_multiplier) {
  std::vector<Layer> layers{Conv{64, 7, 2, 3}, Relu{}, MaxPool{3, 2}};
  switch (depth) {
    case 15:
      layers.insert(layers.end(), {ResidualBasic{64, 2, 1}, ResidualBasic{128, 2, 2},
                                   ResidualBasic{256, 2, 1}});
      break;
    case 29:
      layers.insert(layers.end(), {ResidualBasic{64, 3, 1}, ResidualBasic{128, 4, 2},
                                   ResidualBasic{256, 6, 1}});
      break;
    case 43:
      layers.insert(layers.end(),
                    {ResidualBottleneck{64, 256, 3, 1}, ResidualBottleneck{128, 512, 4, 2},
                     ResidualBottleneck{256, 1024, 6, 1}});
      break;
    case 94:
      layers.insert(layers.end(),
                    {ResidualBottleneck{64, 256, 3, 1}, ResidualBottleneck{128, 512, 4, 2},
                     ResidualBottleneck{256, 1024, 23, 1}});
      break;
    default:
      throw NetError("tutornet depth must be 15, 29, 43 or 94");
  }
  if (depth >= 43) layers.insert(layers.end(), {Conv{128, 1, 1, 0}, Relu{}});
  layers.insert(layers.end(), {Conv{1, 1, 1, 0, /*fixed_width=*/true},
                               FinalActivation{FinalKind::weight_activation}});
  NetworkSpec spec{"tutornet-" + std::to_string(depth), std::move(layers),
                   width_multiplier, 8, 3};
  validate_spec(spec);
  return spec;
}

inline NetworkSpec main_net_spec(const std::string& kind, Rational width_multiplier) {
  std::vector<Layer> layers;
  if (kind == "mcnn-tiny") {
    // Three columns with distinct receptive fields (9 / 7 / 5 first layers).
    std::vector<Layer> wide{Conv{6, 9, 1, 4},  Relu{}, MaxPool{2, 2},
                            Conv{12, 7, 1, 3}, Relu{}, MaxPool{2, 2},
                            Conv{6, 7, 1, 3},  Relu{}, MaxPool{2, 2}};
    std::vector<Layer> mid{Conv{8, 7, 1, 3},  Relu{}, MaxPool{2, 2},
                           Conv{16, 5, 1, 2}, Relu{}, MaxPool{2, 2},
                           Conv{8, 5, 1, 2},  Relu{}, MaxPool{2, 2}};
    std::vector<Layer> narrow{Conv{10, 5, 1, 2}, Relu{}, MaxPool{2, 2},
                              Conv{20, 3, 1, 1}, Relu{}, MaxPool{2, 2},
                              Conv{10, 3, 1, 1}, Relu{}, MaxPool{2, 2}};
    layers = {Columns{{std::move(wide), std::move(mid), std::move(narrow)}},
              Conv{1, 1, 1, 0, true}, FinalActivation{FinalKind::relu}};
  } else if (kind == "vggish-tiny") {
    layers = {Conv{8, 3, 1, 1},  Relu{}, Conv{8, 3, 1, 1},  Relu{}, MaxPool{2, 2},
              Conv{16, 3, 1, 1}, Relu{}, Conv{16, 3, 1, 1}, Relu{}, MaxPool{2, 2},
              Conv{16, 3, 1, 1}, Relu{}, Conv{16, 3, 1, 1}, Relu{}, MaxPool{2, 2},
              Conv{16, 3, 1, 1}, Relu{}, Conv{1, 1, 1, 0, true},
              FinalActivation{FinalKind::relu}};
  } else if (kind == "unet-tiny") {
    // The skip sits at 1/4 resolution: any input divisible by 8 still has
    // even dims there, so the inner pool/upsample pair restores size exactly.
    std::vector<Layer> bottom{MaxPool{2, 2}, Conv{24, 3, 1, 1}, Relu{}, Upsample{2}};
    layers = {Conv{8, 3, 1, 1},  Relu{}, MaxPool{2, 2},
              Conv{16, 3, 1, 1}, Relu{}, MaxPool{2, 2},
              Conv{16, 3, 1, 1}, Relu{}, SkipConcat{std::move(bottom)},
              Conv{24, 3, 1, 1}, Relu{}, MaxPool{2, 2},
              Conv{24, 3, 1, 1}, Relu{}, Conv{1, 1, 1, 0, true},
              FinalActivation{FinalKind::relu}};
  } else if (kind == "dense-tiny") {
    layers = {Conv{12, 3, 1, 1}, Relu{}, MaxPool{2, 2}, DenseBlock{8, 3},
              Conv{24, 1, 1, 0}, Relu{}, MaxPool{2, 2}, DenseBlock{8, 3},
              Conv{32, 1, 1, 0}, Relu{}, MaxPool{2, 2}, DenseBlock{8, 2},
              Conv{1, 1, 1, 0, true}, FinalActivation{FinalKind::relu}};
  } else {
    throw NetError("unknown main net kind '" + kind +
                   "' (mcnn-tiny, vggish-tiny, unet-tiny, dense-tiny)");
  }
  NetworkSpec spec{kind, std::move(layers), width_multiplier, 8, 3};
  validate_spec(spec);
  return spec;
}

// Resolves a spec name recorded in a checkpoint.
inline NetworkSpec spec_from_name(const std::string& name, Rational width_multiplier) {
  if (name.rfind("tutornet-", 0) == 0)
    return tutornet_spec(std::stoi(name.substr(9)), width_multiplier);
  return main_net_spec(name, width_multiplier);
}

inline void set_weight_floor(NetworkSpec& spec, double t_floor) {
  for (Layer& layer : spec.layers)
    if (auto* f = std::get_if<FinalActivation>(&layer.v))
      if (f->kind == FinalKind::weight_activation) f->t_floor = t_floor;
}

// He-style init: kernels ~ N(0, 2 / fan_in), biases zero. When the spec
// ends in the weight activation, the head bias starts at +1 so the initial
// weight map sits near sigmoid(1) ~ 0.73 and the curriculum begins
// permissive (stand-in for the pre-trained backbone).
inline NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
  std::vector<detail::ConvSlot> slots;
  detail::plan_convs(spec.layers, spec.in_channels, spec.width_multiplier, slots);
  Rng rng(seed);
  NetworkParams params;
  params.tensors.reserve(slots.size() * 2);
  for (const auto& s : slots) {
    std::size_t n = static_cast<std::size_t>(s.out_c) * s.in_c * s.k * s.k;
    std::vector<double> kvals(n);
    double sd = std::sqrt(2.0 / (static_cast<double>(s.in_c) * s.k * s.k));
    for (double& v : kvals) v = rng.normal() * sd;
    params.tensors.push_back(
        Tensor::from({s.out_c, s.in_c, s.k, s.k}, std::move(kvals), true));
    params.tensors.push_back(Tensor::zeros({s.out_c}, true));
  }
  bool tutor_head = false;
  if (!spec.layers.empty())
    if (const auto* f = std::get_if<FinalActivation>(&spec.layers.back().v))
      tutor_head = f->kind == FinalKind::weight_activation;
  if (tutor_head)
    for (double& v : params.tensors.back().mutable_values()) v = 1.0;
  return params;
}

namespace detail {

struct ParamCursor {
  const std::vector<Tensor>* tensors;
  std::size_t next = 0;

  std::pair<Tensor, Tensor> conv_pair() {
    if (next + 2 > tensors->size())
      throw NetError("params exhausted: spec and parameter list disagree");
    Tensor k = (*tensors)[next];
    Tensor b = (*tensors)[next + 1];
    next += 2;
    return {k, b};
  }
};

inline Tensor run_layers(const std::vector<Layer>& layers, Tensor x, ParamCursor& cur) {
  for (const Layer& layer : layers) {
    std::visit(
        overloaded{
            [&](const Conv& c) {
              auto [k, b] = cur.conv_pair();
              x = conv2d(x, k, b, c.stride, c.padding);
            },
            [&](const MaxPool& p) { x = maxpool2d(x, p.k, p.stride); },
            [&](const Relu&) { x = relu(x); },
            [&](const Upsample& u) { x = upsample_nearest(x, u.factor); },
            [&](const ResidualBasic& b) {
              for (int r = 0; r < b.repeats; ++r) {
                int s = r == 0 ? b.stride : 1;
                auto [k1, b1] = cur.conv_pair();
                auto [k2, b2] = cur.conv_pair();
                Tensor y = relu(conv2d(x, k1, b1, s, 1));
                y = conv2d(y, k2, b2, 1, 1);
                Tensor skip = x;
                if (x.shape()[1] != y.shape()[1] || s != 1) {
                  auto [kp, bp] = cur.conv_pair();
                  skip = conv2d(x, kp, bp, s, 0);
                }
                x = relu(add(y, skip));
              }
            },
            [&](const ResidualBottleneck& b) {
              for (int r = 0; r < b.repeats; ++r) {
                int s = r == 0 ? b.stride : 1;
                auto [k1, b1] = cur.conv_pair();
                auto [k2, b2] = cur.conv_pair();
                auto [k3, b3] = cur.conv_pair();
                Tensor y = relu(conv2d(x, k1, b1, s, 0));
                y = relu(conv2d(y, k2, b2, 1, 1));
                y = conv2d(y, k3, b3, 1, 0);
                Tensor skip = x;
                if (x.shape()[1] != y.shape()[1] || s != 1) {
                  auto [kp, bp] = cur.conv_pair();
                  skip = conv2d(x, kp, bp, s, 0);
                }
                x = relu(add(y, skip));
              }
            },
            [&](const DenseBlock& d) {
              for (int i = 0; i < d.layers; ++i) {
                auto [k, b] = cur.conv_pair();
                Tensor y = relu(conv2d(x, k, b, 1, 1));
                x = concat_channels({x, y});
              }
            },
            [&](const Columns& c) {
              std::vector<Tensor> outs;
              outs.reserve(c.branches.size());
              for (const auto& branch : c.branches)
                outs.push_back(run_layers(branch, x, cur));
              x = concat_channels(outs);
            },
            [&](const SkipConcat& s) {
              Tensor inner = run_layers(s.inner, x, cur);
              x = concat_channels({x, inner});
            },
            [&](const FinalActivation& f) {
              switch (f.kind) {
                case FinalKind::weight_activation:
                  x = floored_sigmoid(x, f.t_floor);
                  break;
                case FinalKind::relu:
                  x = relu(x);
                  break;
                case FinalKind::none:
                  break;
              }
            },
        },
        layer.v);
  }
  return x;
}

}  // namespace detail

inline Tensor forward(const NetworkSpec& spec, const NetworkParams& params,
                      const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != spec.in_channels)
    throw NetError(spec.name + ": input must be Nx" + std::to_string(spec.in_channels) +
                   "xHxW, got " + shape_str(s));
  if (s[2] % spec.downsampling != 0 || s[3] % spec.downsampling != 0)
    throw NetError(spec.name + ": input dims must be divisible by " +
                   std::to_string(spec.downsampling) + ", got " + shape_str(s));
  detail::ParamCursor cur{&params.tensors};
  Tensor out = detail::run_layers(spec.layers, x, cur);
  if (cur.next != params.tensors.size())
    throw NetError(spec.name + ": parameter list longer than spec consumes");
  return out;
}

}  // namespace tutornet
