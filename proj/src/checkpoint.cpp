#include "mushroom/checkpoint.hpp"

#include "mushroom/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mushroom {

namespace {

constexpr std::string_view kMagic = "MUSHROOMNET-CKPT 1";

template <class U>
void put_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

template <class U>
U get_le(const char* p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return bits;
}

std::size_t element_size(DType dtype) { return dtype == DType::F32 ? 4 : 8; }

std::string next_line(const std::string& bytes, std::size_t& pos) {
  const auto end = bytes.find('\n', pos);
  if (end == std::string::npos) throw DataError("checkpoint: truncated header");
  std::string line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

} // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string payload;
  std::ostringstream header;
  header << kMagic << '\n';
  header << "meta " << ckpt.metadata_json.size() << '\n' << ckpt.metadata_json << '\n';
  for (const auto& a : ckpt.arrays) {
    if (a.name.empty() || a.name.find_first_of(" \t\n") != std::string::npos) {
      throw ArgumentError("checkpoint: array name '" + a.name + "' must be non-empty without whitespace");
    }
    if (static_cast<std::int64_t>(a.values.size()) != a.shape.numel()) {
      throw ShapeError("checkpoint: array '" + a.name + "' has " + std::to_string(a.values.size()) +
                       " values for shape " + a.shape.str());
    }
    const std::size_t offset = payload.size();
    for (double v : a.values) {
      if (a.dtype == DType::F32) {
        put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le(payload, std::bit_cast<std::uint64_t>(v));
      }
    }
    header << "array " << a.name << ' ' << dtype_name(a.dtype) << ' ' << a.shape.rank();
    for (auto d : a.shape.dims()) header << ' ' << d;
    header << ' ' << offset << ' ' << payload.size() - offset << '\n';
  }
  header << "end\n";
  return header.str() + payload;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  if (next_line(bytes, pos) != kMagic) throw DataError("checkpoint: bad magic line");

  Checkpoint ckpt;
  {
    std::istringstream meta(next_line(bytes, pos));
    std::string tag;
    std::size_t len = 0;
    if (!(meta >> tag >> len) || tag != "meta") throw DataError("checkpoint: missing meta line");
    if (pos + len + 1 > bytes.size() || bytes[pos + len] != '\n') {
      throw DataError("checkpoint: truncated metadata");
    }
    ckpt.metadata_json = bytes.substr(pos, len);
    pos += len + 1;
  }

  struct Entry {
    NamedArray array;
    std::size_t offset, nbytes;
  };
  std::vector<Entry> entries;
  for (;;) {
    const std::string line = next_line(bytes, pos);
    if (line == "end") break;
    std::istringstream is(line);
    std::string tag, name, dtype;
    std::size_t rank = 0;
    if (!(is >> tag >> name >> dtype >> rank) || tag != "array") {
      throw DataError("checkpoint: malformed array line '" + line + "'");
    }
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) {
      if (!(is >> d)) throw DataError("checkpoint: malformed dims in '" + line + "'");
    }
    Entry e{};
    if (!(is >> e.offset >> e.nbytes)) throw DataError("checkpoint: malformed offsets in '" + line + "'");
    e.array.name = name;
    e.array.dtype = parse_dtype(dtype);
    e.array.shape = Shape(dims);
    entries.push_back(std::move(e));
  }

  const std::size_t base = pos;
  for (auto& e : entries) {
    const std::size_t esize = element_size(e.array.dtype);
    const auto count = static_cast<std::size_t>(e.array.shape.numel());
    if (e.nbytes != count * esize || base + e.offset + e.nbytes > bytes.size()) {
      throw DataError("checkpoint: payload of '" + e.array.name + "' out of bounds");
    }
    const char* p = bytes.data() + base + e.offset;
    e.array.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (e.array.dtype == DType::F32) {
        e.array.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
      } else {
        e.array.values[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
      }
    }
    ckpt.arrays.push_back(std::move(e.array));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

} // namespace mushroom
