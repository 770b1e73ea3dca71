#include "mkgrag/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <stdexcept>

namespace mkgrag::index {

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Document: return "document";
    case Kind::Entity: return "entity";
    case Kind::Edge: return "edge";
    case Kind::Segment: return "segment";
  }
  throw std::logic_error("bad kind");
}

Kind kind_from_name(const std::string& s) {
  if (s == "document") return Kind::Document;
  if (s == "entity") return Kind::Entity;
  if (s == "edge") return Kind::Edge;
  if (s == "segment") return Kind::Segment;
  throw std::runtime_error("unknown index kind: " + s);
}

double cosine_similarity(const backends::EmbeddingVector& a,
                         const backends::EmbeddingVector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (na == 0 || nb == 0) throw std::invalid_argument("cosine: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& [_, part] : partitions_) n += part.size();
  return n;
}

std::size_t VectorIndex::size(Kind kind) const {
  std::shared_lock lock(mutex_);
  auto it = partitions_.find(kind);
  return it == partitions_.end() ? 0 : it->second.size();
}

UpsertResult VectorIndex::upsert(const std::vector<IndexEntry>& entries) {
  std::unique_lock lock(mutex_);
  UpsertResult result;
  for (const auto& e : entries) {
    if (e.vector.size() != dim_) {
      result.errors.push_back(e.item_id + ": dim " + std::to_string(e.vector.size()) +
                              " != index dim " + std::to_string(dim_));
      continue;
    }
    partitions_[e.kind][e.item_id] = e;
    ++result.applied;
  }
  return result;
}

std::vector<ScoredHit> VectorIndex::search_topk(const backends::EmbeddingVector& query,
                                                Kind kind, std::size_t k) const {
  if (k < 1) throw std::invalid_argument("search_topk: k must be >= 1");
  std::shared_lock lock(mutex_);
  auto pit = partitions_.find(kind);
  if (pit == partitions_.end()) return {};

  std::vector<ScoredHit> hits;
  hits.reserve(pit->second.size());
  for (const auto& [id, entry] : pit->second)
    hits.push_back({id, kind, cosine_similarity(query, entry.vector)});
  std::sort(hits.begin(), hits.end(), [](const ScoredHit& a, const ScoredHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

const IndexEntry* VectorIndex::find(Kind kind, const std::string& item_id) const {
  std::shared_lock lock(mutex_);
  auto pit = partitions_.find(kind);
  if (pit == partitions_.end()) return nullptr;
  auto it = pit->second.find(item_id);
  return it == pit->second.end() ? nullptr : &it->second;
}

// File layout (little endian):
//   magic "MKGI", u32 version, u32 dim, u64 count, u64 fnv1a checksum of
//   the record block, then per record: u8 kind, u32 id_len, id bytes,
//   u32 payload_len, payload bytes, dim float32 values.
namespace {

constexpr char kMagic[4] = {'M', 'K', 'G', 'I'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

void put_str(std::string& buf, const std::string& s) {
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
  buf.append(s);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  template <typename T>
  T get() {
    if (pos + sizeof(T) > buf.size()) throw std::runtime_error("index file truncated");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_str() {
    auto n = get<std::uint32_t>();
    if (pos + n > buf.size()) throw std::runtime_error("index file truncated");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void VectorIndex::save(const std::string& path) const {
  std::shared_lock lock(mutex_);
  std::string body;
  std::uint64_t count = 0;
  for (const auto& [kind, part] : partitions_) {
    for (const auto& [id, entry] : part) {
      put<std::uint8_t>(body, static_cast<std::uint8_t>(kind));
      put_str(body, id);
      put_str(body, entry.payload_ref);
      for (Eigen::Index i = 0; i < entry.vector.size(); ++i)
        put<float>(body, entry.vector[i]);
      ++count;
    }
  }
  std::string header;
  header.append(kMagic, 4);
  put<std::uint32_t>(header, kVersion);
  put<std::uint32_t>(header, static_cast<std::uint32_t>(dim_));
  put<std::uint64_t>(header, count);
  put<std::uint64_t>(header, backends::fnv1a64(body, backends::kSlotHashSeed));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write index file: " + path);
  out << header << body;
}

VectorIndex VectorIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read index file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  if (content.size() < 24 || std::memcmp(content.data(), kMagic, 4) != 0)
    throw std::runtime_error("not an index file: " + path);

  Reader r{content, 4};
  auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw std::runtime_error("unsupported index version");
  auto dim = r.get<std::uint32_t>();
  auto count = r.get<std::uint64_t>();
  auto checksum = r.get<std::uint64_t>();
  std::string body = content.substr(r.pos);
  if (backends::fnv1a64(body, backends::kSlotHashSeed) != checksum)
    throw std::runtime_error("index checksum mismatch: " + path);

  VectorIndex idx(static_cast<int>(dim));
  std::vector<IndexEntry> entries;
  entries.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    IndexEntry e;
    e.kind = static_cast<Kind>(r.get<std::uint8_t>());
    e.item_id = r.get_str();
    e.payload_ref = r.get_str();
    e.vector.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) e.vector[i] = r.get<float>();
    entries.push_back(std::move(e));
  }
  idx.upsert(entries);
  return idx;
}

}  // namespace mkgrag::index
