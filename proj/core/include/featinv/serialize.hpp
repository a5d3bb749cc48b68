#pragma once

#include <string>
#include <vector>

#include "featinv/tensor.hpp"

namespace featinv::io {

// On-disk formats are little-endian float64 payloads behind a JSON header.
// Layout: magic, u32 header length, UTF-8 JSON header, raw payload.

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Multi-tensor archive ("FINVARCH"); meta_json is an arbitrary JSON object
// stored verbatim in the header.
void write_archive(const std::string& path, const std::string& meta_json,
                   const std::vector<NamedTensor>& tensors);

struct ArchiveContent {
  std::string meta_json;
  std::vector<NamedTensor> tensors;
};
ArchiveContent read_archive(const std::string& path);

// Single-tensor blob ("FINVBLOB") used for feature/latent files.
void write_tensor_blob(const std::string& path, const Tensor& t);
Tensor read_tensor_blob(const std::string& path);

std::uint64_t file_checksum(const std::string& path);

}  // namespace featinv::io
