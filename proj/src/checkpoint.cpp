#include "eurnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace eurnet {

namespace {

constexpr char kMagic[8] = {'E', 'U', 'R', 'N', 'E', 'T', 'C', '1'};

template <typename U>
void put_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_le(const unsigned char* bytes) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename F>
double read_value(const unsigned char* bytes) {
  if constexpr (sizeof(F) == 4) {
    return std::bit_cast<float>(get_le<std::uint32_t>(bytes));
  } else {
    return std::bit_cast<double>(get_le<std::uint64_t>(bytes));
  }
}

nlohmann::json read_header(std::istream& in) {
  char magic[sizeof(kMagic)];
  unsigned char len_bytes[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file");
  }
  if (!in.read(reinterpret_cast<char*>(len_bytes), 8)) throw DataError("truncated checkpoint header");
  const auto header_len = get_le<std::uint64_t>(len_bytes);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw DataError("truncated checkpoint header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  }
}

}  // namespace

template <typename T>
void save_checkpoint(std::ostream& out, const ParamList<T>& params, const CheckpointMeta& meta) {
  nlohmann::json header;
  header["dtype"] = dtype_name<T>();
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, p] : params) {
    header["tensors"].push_back({{"name", name}, {"shape", p.shape()}, {"offset", offset}});
    offset += p.size() * sizeof(T);
  }
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, p] : params) {
    for (T v : p.values()) {
      if constexpr (sizeof(T) == 4) {
        put_le(out, std::bit_cast<std::uint32_t>(v));
      } else {
        put_le(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamList<T>& params, const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_checkpoint(out, params, meta);
}

template <typename T>
CheckpointMeta load_checkpoint(std::istream& in, const ParamList<T>& params) {
  const nlohmann::json header = read_header(in);
  const std::vector<unsigned char> data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  const std::string dtype = header.at("dtype");
  if (dtype != "f32" && dtype != "f64") throw DataError("unknown checkpoint dtype " + dtype);
  const std::size_t width = dtype == "f32" ? 4 : 8;
  std::map<std::string, nlohmann::json> stored;
  for (const auto& t : header.at("tensors")) stored[t.at("name").get<std::string>()] = t;

  for (const auto& [name, p] : params) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw DataError("checkpoint has no tensor " + name);
    const auto shape = it->second.at("shape").template get<Shape>();
    if (shape != p.shape()) {
      throw DimensionError("checkpoint tensor " + name + " has shape " + shape_str(shape) + ", expected " +
                           shape_str(p.shape()));
    }
    const auto offset = it->second.at("offset").template get<std::uint64_t>();
    if (offset + p.size() * width > data.size()) throw DataError("checkpoint data truncated at " + name);
    Tensor<T> handle = p;
    auto dst = handle.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const unsigned char* src = data.data() + offset + i * width;
      dst[i] = static_cast<T>(width == 4 ? read_value<float>(src) : read_value<double>(src));
    }
  }
  return header.value("meta", CheckpointMeta{});
}

template <typename T>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, const ParamList<T>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return load_checkpoint(in, params);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const nlohmann::json header = read_header(in);
  return {header.at("dtype").get<std::string>(), header.value("meta", CheckpointMeta{})};
}

#define EURNET_INSTANTIATE_CHECKPOINT(T)                                                              \
  template void save_checkpoint(std::ostream&, const ParamList<T>&, const CheckpointMeta&);           \
  template void save_checkpoint(const std::filesystem::path&, const ParamList<T>&, const CheckpointMeta&); \
  template CheckpointMeta load_checkpoint(std::istream&, const ParamList<T>&);                        \
  template CheckpointMeta load_checkpoint(const std::filesystem::path&, const ParamList<T>&);

EURNET_INSTANTIATE_CHECKPOINT(float)
EURNET_INSTANTIATE_CHECKPOINT(double)

}  // namespace eurnet
