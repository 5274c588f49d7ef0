#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "asvae/errors.hpp"
#include "asvae/vae.hpp"
#include "json.hpp"

namespace asvae {

namespace {

constexpr char kMagic[8] = {'A', 'S', 'V', 'A', 'E', 'W', '0', '1'};
constexpr int kFormatVersion = 1;

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::vector<std::int64_t> shape_of(const TensorRef& t) {
  if (t.cols == 1 && t.name.ends_with(".bias")) return {t.rows};
  return {t.rows, t.cols};
}

}  // namespace

void save_weights(const VaeParams& p, const std::filesystem::path& path) {
  p.validate();
  nlohmann::json header;
  header["format"] = "asvae-weights";
  header["format_version"] = kFormatVersion;
  header["F"] = p.dims.freq_bins;
  header["L"] = p.dims.latent_dim;
  header["H"] = p.dims.hidden_dim;
  header["dtype"] = "float64-le";
  header["layout"] = "row-major";
  header["tensors"] = nlohmann::json::array();

  std::string payload;
  for (const TensorRef& t : p.tensors()) {
    const std::uint64_t offset = payload.size();
    const auto m = t.map();
    for (Eigen::Index r = 0; r < t.rows; ++r) {
      for (Eigen::Index c = 0; c < t.cols; ++c) put_u64_le(payload, std::bit_cast<std::uint64_t>(m(r, c)));
    }
    header["tensors"].push_back({{"name", std::string(t.name)},
                                 {"shape", shape_of(t)},
                                 {"offset", offset},
                                 {"nbytes", payload.size() - offset}});
  }

  const std::string header_text = header.dump();
  std::string blob(kMagic, sizeof(kMagic));
  put_u64_le(blob, header_text.size());
  blob += header_text;
  blob += payload;

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open weight file for writing: " + path.string());
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!os) throw IoError("failed writing weight file: " + path.string());
}

VaeParams load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open weight file: " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + ": not an asvae weight file (bad magic)");
  }
  const std::uint64_t header_len = get_u64_le(bytes + 8);
  if (header_len > blob.size() - 16) {
    throw FormatError(path.string() + ": truncated header (declared " + std::to_string(header_len) +
                      " bytes)");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }

  VaeParams p;
  try {
    if (header.at("format_version").get<int>() != kFormatVersion) {
      throw FormatError(path.string() + ": unsupported format_version " +
                        header.at("format_version").dump());
    }
    VaeDims dims{header.at("F").get<int>(), header.at("L").get<int>(), header.at("H").get<int>()};
    if (dims.freq_bins <= 0 || dims.latent_dim <= 0 || dims.hidden_dim <= 0) {
      throw FormatError(path.string() + ": non-positive dimension in header");
    }
    p = VaeParams::zeros(dims);

    const std::uint64_t payload_start = 16 + header_len;
    const std::uint64_t payload_size = blob.size() - payload_start;
    const auto& entries = header.at("tensors");
    std::uint64_t expected_total = 0;
    for (const TensorRef& t : p.tensors()) {
      const nlohmann::json* entry = nullptr;
      for (const auto& e : entries) {
        if (e.at("name").get<std::string>() == t.name) entry = &e;
      }
      if (entry == nullptr) throw FormatError(path.string() + ": missing tensor " + std::string(t.name));

      const auto shape = entry->at("shape").get<std::vector<std::int64_t>>();
      if (shape != shape_of(t)) {
        std::string got;
        for (auto s : shape) got += (got.empty() ? "" : "x") + std::to_string(s);
        throw FormatError(path.string() + ": tensor " + std::string(t.name) + " has shape " + got +
                          ", header dimensions F=" + std::to_string(dims.freq_bins) +
                          " L=" + std::to_string(dims.latent_dim) +
                          " H=" + std::to_string(dims.hidden_dim) + " require " +
                          std::to_string(t.rows) + "x" + std::to_string(t.cols));
      }
      const auto offset = entry->at("offset").get<std::uint64_t>();
      const auto nbytes = entry->at("nbytes").get<std::uint64_t>();
      if (nbytes != static_cast<std::uint64_t>(t.size()) * 8) {
        throw FormatError(path.string() + ": tensor " + std::string(t.name) + " byte count mismatch");
      }
      if (offset > payload_size || nbytes > payload_size - offset) {
        throw FormatError(path.string() + ": truncated payload for tensor " + std::string(t.name));
      }
      expected_total += nbytes;
      const unsigned char* src = bytes + payload_start + offset;
      auto m = t.map();
      for (Eigen::Index r = 0; r < t.rows; ++r) {
        for (Eigen::Index c = 0; c < t.cols; ++c, src += 8) {
          m(r, c) = std::bit_cast<double>(get_u64_le(src));
        }
      }
    }
    if (expected_total != payload_size) {
      throw FormatError(path.string() + ": payload size " + std::to_string(payload_size) +
                        " does not match declared tensors (" + std::to_string(expected_total) + ")");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }

  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return p;
}

}  // namespace asvae
