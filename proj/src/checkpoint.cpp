#include "fcdiag/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fcdiag {

namespace {

constexpr char kMagic[4] = {'D', 'A', 'C', 'W'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw std::runtime_error(path + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path + ": cannot open for writing");
  os.write(kMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i)
      write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.value().data()),
             static_cast<std::streamsize>(sizeof(double) * t.size()));
  }
  if (!os) throw std::runtime_error(path + ": write failed");
}

std::vector<Tensor> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(path + ": cannot open");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + ": not a DACW checkpoint");
  const std::uint32_t count = read_u32(is, path);
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rank = read_u32(is, path);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<Index>(read_u32(is, path)));
    Eigen::ArrayXd data(shape_size(shape));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(sizeof(double) * data.size()));
    if (!is) throw std::runtime_error(path + ": truncated tensor data");
    out.emplace_back(std::move(shape), std::move(data));
  }
  return out;
}

void load_checkpoint(const std::string& path, std::vector<Tensor>& tensors) {
  std::vector<Tensor> loaded = read_checkpoint(path);
  if (loaded.size() != tensors.size())
    throw std::runtime_error(path + ": checkpoint has " +
                             std::to_string(loaded.size()) +
                             " tensors, expected " +
                             std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (loaded[i].shape() != tensors[i].shape())
      throw std::runtime_error(path + ": tensor " + std::to_string(i) +
                               " shape mismatch " +
                               shape_str(loaded[i].shape()) + " vs " +
                               shape_str(tensors[i].shape()));
    tensors[i].raw_value() = loaded[i].value();
  }
}

}  // namespace fcdiag
