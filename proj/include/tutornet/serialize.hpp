#pragma once

// Checkpoints: spec identity (name + width multiplier), the init seed, the
// scale factor and sigma the net was trained against (eval needs both to
// recover counts), then each parameter tensor as a shape header plus a
// little-endian f64 blob.

#include <filesystem>
#include <fstream>

#include "tutornet/io.hpp"
#include "tutornet/nets.hpp"

namespace tutornet {

struct Checkpoint {
  std::string spec_name;
  Rational width_multiplier{1, 1};
  std::uint64_t seed = 0;
  double scale_factor = 1.0;
  double sigma = 15.0;
  std::vector<Tensor> tensors;
};

inline void write_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec,
                             const NetworkParams& params, std::uint64_t seed,
                             double scale_factor, double sigma) {
  atomic_write(path, [&](std::ostream& os) {
    os.write("TGCKPT1", 7);
    detail::put_u32(os, static_cast<std::uint32_t>(spec.name.size()));
    os.write(spec.name.data(), static_cast<std::streamsize>(spec.name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(spec.width_multiplier.num));
    detail::put_u32(os, static_cast<std::uint32_t>(spec.width_multiplier.den));
    detail::put_u64(os, seed);
    detail::put_f64(os, scale_factor);
    detail::put_f64(os, sigma);
    detail::put_u32(os, static_cast<std::uint32_t>(params.tensors.size()));
    for (const Tensor& t : params.tensors) {
      detail::put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
      for (int d : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(d));
      for (double v : t.values()) detail::put_f64(os, v);
    }
  });
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string());
  char magic[7];
  if (!is.read(magic, 7) || std::string(magic, 7) != "TGCKPT1")
    throw ParseError(path.string() + ": bad magic, not a checkpoint");
  Checkpoint ck;
  std::uint32_t name_len = detail::get_u32(is, path);
  if (name_len > 256) throw ParseError(path.string() + ": implausible spec name length");
  ck.spec_name.resize(name_len);
  if (!is.read(ck.spec_name.data(), name_len))
    throw ParseError(path.string() + ": truncated file");
  ck.width_multiplier.num = static_cast<int>(detail::get_u32(is, path));
  ck.width_multiplier.den = static_cast<int>(detail::get_u32(is, path));
  ck.seed = detail::get_u64(is, path);
  ck.scale_factor = detail::get_f64(is, path);
  ck.sigma = detail::get_f64(is, path);
  std::uint32_t n_tensors = detail::get_u32(is, path);
  ck.tensors.reserve(n_tensors);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::uint32_t ndim = detail::get_u32(is, path);
    if (ndim == 0 || ndim > 8) throw ParseError(path.string() + ": bad tensor rank");
    Shape shape(ndim);
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<int>(detail::get_u32(is, path));
      if (shape[d] <= 0) throw ParseError(path.string() + ": bad tensor dimension");
      numel *= shape[d];
    }
    std::vector<double> values(static_cast<std::size_t>(numel));
    for (double& v : values) v = detail::get_f64(is, path);
    ck.tensors.push_back(Tensor::from(std::move(shape), std::move(values), true));
  }
  return ck;
}

// Rebuilds the spec recorded in the checkpoint and validates every
// parameter shape against it.
inline std::pair<NetworkSpec, NetworkParams> restore_network(const Checkpoint& ck) {
  NetworkSpec spec = spec_from_name(ck.spec_name, ck.width_multiplier);
  NetworkParams reference = init_params(spec, 0);
  if (reference.tensors.size() != ck.tensors.size())
    throw ParseError("checkpoint for " + ck.spec_name + " holds " +
                     std::to_string(ck.tensors.size()) + " tensors, spec needs " +
                     std::to_string(reference.tensors.size()));
  for (std::size_t i = 0; i < ck.tensors.size(); ++i)
    if (ck.tensors[i].shape() != reference.tensors[i].shape())
      throw ParseError("checkpoint tensor " + std::to_string(i) + " has shape " +
                       shape_str(ck.tensors[i].shape()) + ", spec needs " +
                       shape_str(reference.tensors[i].shape()));
  return {std::move(spec), NetworkParams{ck.tensors}};
}

}  // namespace tutornet
