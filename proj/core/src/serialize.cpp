#include "featinv/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "featinv/error.hpp"

namespace featinv::io {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "serialized blobs are little-endian; big-endian hosts are "
              "not supported");

constexpr char kArchiveMagic[8] = {'F', 'I', 'N', 'V', 'A', 'R', 'C', 'H'};
constexpr char kBlobMagic[8] = {'F', 'I', 'N', 'V', 'B', 'L', 'O', 'B'};

void write_header(std::ofstream& f, const char magic[8],
                  const std::string& header) {
  f.write(magic, 8);
  const std::uint32_t n = static_cast<std::uint32_t>(header.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
}

std::string read_header(std::ifstream& f, const char magic[8],
                        const std::string& path) {
  char m[8];
  f.read(m, 8);
  if (!f || std::memcmp(m, magic, 8) != 0)
    throw_input("not a recognized featinv file: " + path);
  std::uint32_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  std::string header(n, '\0');
  f.read(header.data(), n);
  if (!f) throw_input("truncated header in " + path);
  return header;
}

}  // namespace

void write_archive(const std::string& path, const std::string& meta_json,
                   const std::vector<NamedTensor>& tensors) {
  json header;
  header["format"] = "finv-archive";
  header["format_version"] = 1;
  header["meta"] = json::parse(meta_json.empty() ? "{}" : meta_json);
  json list = json::array();
  for (const auto& nt : tensors) {
    json e;
    e["name"] = nt.name;
    e["shape"] = nt.value.shape();
    list.push_back(e);
  }
  header["tensors"] = list;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_input("cannot open for writing: " + path);
  write_header(f, kArchiveMagic, header.dump());
  for (const auto& nt : tensors)
    f.write(reinterpret_cast<const char*>(nt.value.data()),
            static_cast<std::streamsize>(sizeof(double) * nt.value.size()));
  if (!f) throw_input("short write to " + path);
}

ArchiveContent read_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_input("cannot open: " + path);
  const std::string header_str = read_header(f, kArchiveMagic, path);
  json header = json::parse(header_str);
  ArchiveContent out;
  out.meta_json = header.at("meta").dump();
  for (const auto& e : header.at("tensors")) {
    NamedTensor nt;
    nt.name = e.at("name").get<std::string>();
    const Shape shape = e.at("shape").get<Shape>();
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(sizeof(double) * data.size()));
    if (!f) throw_input("truncated tensor payload in " + path);
    nt.value = Tensor::from(shape, std::move(data));
    out.tensors.push_back(std::move(nt));
  }
  return out;
}

void write_tensor_blob(const std::string& path, const Tensor& t) {
  json header;
  header["format"] = "finv-blob";
  header["format_version"] = 1;
  header["dtype"] = "f64le";
  header["shape"] = t.shape();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_input("cannot open for writing: " + path);
  write_header(f, kBlobMagic, header.dump());
  f.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(sizeof(double) * t.size()));
  if (!f) throw_input("short write to " + path);
}

Tensor read_tensor_blob(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_input("cannot open: " + path);
  json header = json::parse(read_header(f, kBlobMagic, path));
  if (header.at("dtype").get<std::string>() != "f64le")
    throw_input("unsupported dtype in " + path);
  const Shape shape = header.at("shape").get<Shape>();
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(sizeof(double) * data.size()));
  if (!f) throw_input("truncated payload in " + path);
  return Tensor::from(shape, std::move(data));
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_input("cannot open: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 14];
  while (f) {
    f.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
  }
  return h;
}

}  // namespace featinv::io
