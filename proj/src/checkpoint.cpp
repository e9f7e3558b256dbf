#include "lambert/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lambert/io.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

namespace lambert::nn {

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ostringstream manifest;
  std::string blob;
  manifest << "tensors " << tensors.size() << "\n";
  uint64_t offset = 0;
  for (const auto& nt : tensors) {
    manifest << nt.name << "\t";
    for (size_t i = 0; i < nt.tensor->shape.size(); ++i)
      manifest << (i ? "x" : "") << nt.tensor->shape[i];
    manifest << "\t" << offset << "\n";
    const size_t bytes = nt.tensor->numel() * sizeof(float);
    const size_t pos = blob.size();
    blob.resize(pos + bytes);
    std::memcpy(blob.data() + pos, nt.tensor->ptr(), bytes);
    offset += bytes;
  }
  atomic_write_file(path, manifest.str());
  atomic_write_file(path + ".bin", blob);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint manifest " + path);
  std::string header;
  size_t count = 0;
  if (!(in >> header >> count) || header != "tensors")
    throw std::runtime_error("malformed checkpoint manifest " + path);
  in.ignore(1);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ManifestEntry e;
    const size_t t1 = line.find('\t');
    const size_t t2 = line.find('\t', t1 == std::string::npos ? 0 : t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw std::runtime_error("malformed manifest line: " + line);
    e.name = line.substr(0, t1);
    std::string shape_s = line.substr(t1 + 1, t2 - t1 - 1);
    e.offset = std::stoull(line.substr(t2 + 1));
    size_t pos = 0;
    while (pos < shape_s.size()) {
      size_t next = shape_s.find('x', pos);
      if (next == std::string::npos) next = shape_s.size();
      e.shape.push_back(std::stoi(shape_s.substr(pos, next - pos)));
      pos = next + 1;
    }
    entries.push_back(std::move(e));
  }
  if (entries.size() != count)
    throw std::runtime_error("checkpoint manifest entry count mismatch in " + path);
  return entries;
}

void load_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  auto entries = read_manifest(path);
  std::ifstream blob(path + ".bin", std::ios::binary);
  if (!blob) throw std::runtime_error("cannot open checkpoint blob " + path + ".bin");
  for (const auto& nt : tensors) {
    const ManifestEntry* found = nullptr;
    for (const auto& e : entries)
      if (e.name == nt.name) {
        found = &e;
        break;
      }
    if (!found) throw std::runtime_error("checkpoint " + path + " has no tensor '" + nt.name + "'");
    if (found->shape != nt.tensor->shape)
      throw std::runtime_error("checkpoint tensor '" + nt.name + "' shape mismatch");
    blob.seekg(static_cast<std::streamoff>(found->offset));
    blob.read(reinterpret_cast<char*>(nt.tensor->ptr()),
              static_cast<std::streamsize>(nt.tensor->numel() * sizeof(float)));
    if (!blob) throw std::runtime_error("checkpoint blob truncated reading '" + nt.name + "'");
  }
}

}  // namespace lambert::nn
