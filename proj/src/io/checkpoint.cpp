#include "mili/io/checkpoint.hpp"

#include <json.hpp>

#include "mili/common/error.hpp"
#include "mili/io/binary.hpp"

namespace mili::io {

namespace {

constexpr std::string_view kMagic = "MILICKPT";

nlohmann::ordered_json network_json(const policy::NetworkConfig& n) {
  return {{"obs_dim", n.obs_dim},
          {"encoder_hidden", n.encoder_hidden},
          {"feature_dim", n.feature_dim},
          {"conv_channels", n.conv_channels},
          {"conv_kernel", n.conv_kernel},
          {"conv_stride", n.conv_stride},
          {"embedding_dim", n.embedding_dim},
          {"selection_hidden", n.selection_hidden},
          {"selection_heads", n.selection_heads},
          {"policy_hidden", n.policy_hidden},
          {"log_std_min", n.log_std_min},
          {"log_std_max", n.log_std_max},
          {"init_log_std", n.init_log_std}};
}

policy::NetworkConfig network_from_json(const nlohmann::json& j, const std::string& source) {
  try {
    policy::NetworkConfig n;
    n.obs_dim = j.at("obs_dim").get<std::size_t>();
    n.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    n.feature_dim = j.at("feature_dim").get<std::size_t>();
    n.conv_channels = j.at("conv_channels").get<std::size_t>();
    n.conv_kernel = j.at("conv_kernel").get<std::size_t>();
    n.conv_stride = j.at("conv_stride").get<std::size_t>();
    n.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    n.selection_hidden = j.at("selection_hidden").get<std::size_t>();
    n.selection_heads = j.at("selection_heads").get<std::size_t>();
    n.policy_hidden = j.at("policy_hidden").get<std::size_t>();
    n.log_std_min = j.at("log_std_min").get<double>();
    n.log_std_max = j.at("log_std_max").get<double>();
    n.init_log_std = j.at("init_log_std").get<double>();
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::io, source + ": bad network config: " + e.what());
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  const policy::ModelParams& p = checkpoint.params;
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(checkpoint.config_hash);
  w.str(network_json(p.config).dump());
  w.u32(static_cast<std::uint32_t>(p.tensors.size()));
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const ad::Tensor& t = p.tensors[i];
    w.str(i < policy::kParamCount ? policy::param_name(static_cast<policy::Param>(i)) : "");
    w.u32(static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  }
  return w.data();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  ByteReader r(bytes, source);
  if (r.bytes(kMagic.size()) != kMagic) throw Error(ErrorKind::io, source + ": not a checkpoint file");
  if (const std::uint32_t v = r.u32(); v != kCheckpointVersion)
    throw Error(ErrorKind::io, source + ": checkpoint version " + std::to_string(v) + ", expected " +
                                   std::to_string(kCheckpointVersion));
  Checkpoint out;
  out.config_hash = r.u64();
  nlohmann::json net;
  try {
    net = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::io, source + ": bad network config: " + e.what());
  }
  out.params.config = network_from_json(net, source);
  const std::uint32_t count = r.u32();
  if (count != policy::kParamCount)
    throw Error(ErrorKind::shape, source + ": " + std::to_string(count) + " tensors, expected " +
                                      std::to_string(policy::kParamCount));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const std::string_view expected = policy::param_name(static_cast<policy::Param>(i));
    if (name != expected)
      throw Error(ErrorKind::shape, source + ": tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                                        std::string(expected) + "'");
    const std::uint32_t rank = r.u32();
    ad::Shape shape(rank);
    std::size_t size = 1;
    for (auto& d : shape) {
      d = r.u64();
      size *= d;
    }
    if (size * 8 > r.remaining()) r.bytes(size * 8);  // reports the truncation offset
    std::vector<double> values(size);
    for (double& v : values) v = r.f64();
    out.params.tensors.emplace_back(shape, std::move(values));
  }
  r.expect_end();
  policy::validate(out.params);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace mili::io
