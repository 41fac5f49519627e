#include <array>
#include <cstring>
#include <map>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "rawscore/imgio.hpp"

namespace rawscore {

namespace {

constexpr std::uint16_t kImageWidth = 256;
constexpr std::uint16_t kImageLength = 257;
constexpr std::uint16_t kBitsPerSample = 258;
constexpr std::uint16_t kCompression = 259;
constexpr std::uint16_t kPhotometric = 262;
constexpr std::uint16_t kImageDescription = 270;
constexpr std::uint16_t kStripOffsets = 273;
constexpr std::uint16_t kSamplesPerPixel = 277;
constexpr std::uint16_t kRowsPerStrip = 278;
constexpr std::uint16_t kStripByteCounts = 279;
constexpr std::uint16_t kPlanarConfig = 284;
constexpr std::uint16_t kTileWidth = 322;
constexpr std::uint16_t kTileOffsets = 324;
constexpr std::uint16_t kSampleFormat = 339;

constexpr std::uint16_t kTypeAscii = 2;
constexpr std::uint16_t kTypeShort = 3;
constexpr std::uint16_t kTypeLong = 4;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
    if (bytes_.size() < 8) fail(ErrorCode::kCorruptFile, "file shorter than a TIFF header");
    if (bytes_[0] == 'I' && bytes_[1] == 'I') {
      little_ = true;
    } else if (bytes_[0] == 'M' && bytes_[1] == 'M') {
      little_ = false;
    } else {
      fail(ErrorCode::kUnsupportedFormat, "not a TIFF file (bad byte-order mark)");
    }
    const auto magic = u16(2);
    if (magic == 43) fail(ErrorCode::kUnsupportedFormat, "BigTIFF is not supported");
    if (magic != 42) fail(ErrorCode::kCorruptFile, "bad TIFF magic number");
  }

  std::uint16_t u16(std::size_t off) const {
    check(off, 2);
    return little_ ? static_cast<std::uint16_t>(bytes_[off] | (bytes_[off + 1] << 8))
                   : static_cast<std::uint16_t>((bytes_[off] << 8) | bytes_[off + 1]);
  }
  std::uint32_t u32(std::size_t off) const {
    check(off, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint32_t b = bytes_[off + static_cast<std::size_t>(i)];
      v |= little_ ? b << (8 * i) : b << (8 * (3 - i));
    }
    return v;
  }
  void check(std::size_t off, std::size_t len) const {
    if (off > bytes_.size() || len > bytes_.size() - off) {
      fail(ErrorCode::kCorruptFile, "offset beyond end of file");
    }
  }
  std::span<const std::uint8_t> bytes() const { return bytes_; }

 private:
  std::span<const std::uint8_t> bytes_;
  bool little_ = true;
};

struct Entry {
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::size_t value_offset = 0;  // file offset of the first value
};

struct Page {
  std::size_t width = 0;
  std::size_t height = 0;
  int bits = 0;
  std::vector<std::uint32_t> samples;
  std::string description;
};

std::vector<std::uint32_t> read_values(const Reader& r, const Entry& e) {
  std::vector<std::uint32_t> out;
  out.reserve(e.count);
  for (std::uint32_t i = 0; i < e.count; ++i) {
    if (e.type == kTypeShort) {
      out.push_back(r.u16(e.value_offset + 2 * i));
    } else if (e.type == kTypeLong) {
      out.push_back(r.u32(e.value_offset + 4 * i));
    } else {
      fail(ErrorCode::kCorruptFile, "unexpected field type in numeric tag");
    }
  }
  return out;
}

std::uint32_t single(const Reader& r, const std::map<std::uint16_t, Entry>& tags,
                     std::uint16_t tag, std::uint32_t fallback, bool required) {
  auto it = tags.find(tag);
  if (it == tags.end()) {
    if (required) fail(ErrorCode::kCorruptFile, "missing required tag " + std::to_string(tag));
    return fallback;
  }
  auto v = read_values(r, it->second);
  if (v.empty()) fail(ErrorCode::kCorruptFile, "empty tag " + std::to_string(tag));
  return v.front();
}

Page read_page(const Reader& r, std::size_t ifd, std::size_t& next, bool allow32) {
  const std::uint16_t n = r.u16(ifd);
  std::map<std::uint16_t, Entry> tags;
  for (std::uint16_t i = 0; i < n; ++i) {
    const std::size_t at = ifd + 2 + 12 * static_cast<std::size_t>(i);
    Entry e;
    const std::uint16_t tag = r.u16(at);
    e.type = r.u16(at + 2);
    e.count = r.u32(at + 4);
    std::size_t unit = 0;
    switch (e.type) {
      case 1: case 2: case 6: case 7: unit = 1; break;
      case 3: case 8: unit = 2; break;
      case 4: case 9: case 11: unit = 4; break;
      case 5: case 10: case 12: unit = 8; break;
      default: unit = 1; break;
    }
    const std::size_t total = unit * e.count;
    e.value_offset = total <= 4 ? at + 8 : r.u32(at + 8);
    r.check(e.value_offset, total);
    tags[tag] = e;
  }
  next = r.u32(ifd + 2 + 12 * static_cast<std::size_t>(n));

  if (tags.count(kTileWidth) || tags.count(kTileOffsets)) {
    fail(ErrorCode::kUnsupportedFormat, "tiled TIFF is not supported");
  }
  Page page;
  page.width = single(r, tags, kImageWidth, 0, true);
  page.height = single(r, tags, kImageLength, 0, true);
  if (page.width == 0 || page.height == 0) fail(ErrorCode::kCorruptFile, "zero image size");
  if (single(r, tags, kSamplesPerPixel, 1, false) != 1) {
    fail(ErrorCode::kUnsupportedFormat, "only single-channel grayscale TIFF is supported");
  }
  if (tags.count(kBitsPerSample) && tags.at(kBitsPerSample).count != 1) {
    fail(ErrorCode::kUnsupportedFormat, "multi-sample BitsPerSample (RGB?) not supported");
  }
  page.bits = static_cast<int>(single(r, tags, kBitsPerSample, 1, false));
  if (!(page.bits == 8 || page.bits == 16 || (allow32 && page.bits == 32))) {
    fail(ErrorCode::kUnsupportedFormat, "unsupported BitsPerSample " + std::to_string(page.bits));
  }
  if (single(r, tags, kCompression, 1, false) != 1) {
    fail(ErrorCode::kUnsupportedFormat, "compressed TIFF is not supported");
  }
  const auto photometric = single(r, tags, kPhotometric, 1, true);
  if (photometric != 1) {
    fail(ErrorCode::kUnsupportedFormat,
         "PhotometricInterpretation " + std::to_string(photometric) + " not supported");
  }
  if (single(r, tags, kSampleFormat, 1, false) != 1) {
    fail(ErrorCode::kUnsupportedFormat, "only unsigned integer samples are supported");
  }
  if (single(r, tags, kPlanarConfig, 1, false) != 1) {
    fail(ErrorCode::kUnsupportedFormat, "planar configuration not supported");
  }
  if (tags.count(kImageDescription)) {
    const auto& e = tags.at(kImageDescription);
    if (e.type == kTypeAscii) {
      const auto b = r.bytes().subspan(e.value_offset, e.count);
      page.description.assign(b.begin(), b.end());
      while (!page.description.empty() && page.description.back() == '\0') {
        page.description.pop_back();
      }
    }
  }

  if (!tags.count(kStripOffsets) || !tags.count(kStripByteCounts)) {
    fail(ErrorCode::kCorruptFile, "missing strip tags");
  }
  const auto offsets = read_values(r, tags.at(kStripOffsets));
  const auto counts = read_values(r, tags.at(kStripByteCounts));
  if (offsets.size() != counts.size()) fail(ErrorCode::kCorruptFile, "strip tag length mismatch");

  const std::size_t bytes_per_sample = static_cast<std::size_t>(page.bits / 8);
  const std::size_t expected = page.width * page.height * bytes_per_sample;
  std::vector<std::uint8_t> raw;
  raw.reserve(expected);
  for (std::size_t s = 0; s < offsets.size(); ++s) {
    r.check(offsets[s], counts[s]);
    const auto chunk = r.bytes().subspan(offsets[s], counts[s]);
    raw.insert(raw.end(), chunk.begin(), chunk.end());
  }
  if (raw.size() < expected) fail(ErrorCode::kCorruptFile, "strip data shorter than image");

  page.samples.resize(page.width * page.height);
  // Sample bytes follow the file's byte order.
  const bool little = r.bytes()[0] == 'I';
  for (std::size_t i = 0; i < page.samples.size(); ++i) {
    std::uint32_t v = 0;
    for (std::size_t b = 0; b < bytes_per_sample; ++b) {
      const std::uint32_t byte = raw[i * bytes_per_sample + b];
      v |= little ? byte << (8 * b) : byte << (8 * (bytes_per_sample - 1 - b));
    }
    page.samples[i] = v;
  }
  return page;
}

std::vector<Page> read_pages(std::span<const std::uint8_t> bytes, bool allow32) {
  Reader r(bytes);
  std::vector<Page> pages;
  std::set<std::size_t> seen;
  std::size_t ifd = r.u32(4);
  while (ifd != 0) {
    if (!seen.insert(ifd).second) fail(ErrorCode::kCorruptFile, "IFD chain loops");
    std::size_t next = 0;
    pages.push_back(read_page(r, ifd, next, allow32));
    ifd = next;
  }
  if (pages.empty()) fail(ErrorCode::kCorruptFile, "TIFF has no pages");
  for (const auto& p : pages) {
    if (p.width != pages[0].width || p.height != pages[0].height || p.bits != pages[0].bits) {
      fail(ErrorCode::kUnsupportedFormat, "pages differ in size or bit depth");
    }
  }
  return pages;
}

class Writer {
 public:
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void patch32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void align() {
    if (out_.size() % 2) out_.push_back(0);
  }
  std::size_t size() const { return out_.size(); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

struct Tag {
  std::uint16_t id;
  std::uint16_t type;
  std::uint32_t count;
  std::uint32_t value;  // inline value or offset
};

// Pages are written as [strip][description?][IFD] in sequence.
std::vector<std::uint8_t> encode_pages(std::size_t width, std::size_t height, std::size_t depth,
                                       int bits, const std::string& description,
                                       const auto& sample_at) {
  if (width > 0xFFFFFFFFu || height > 0xFFFFFFFFu) {
    fail(ErrorCode::kIoFailure, "image too large for classic TIFF");
  }
  Writer w;
  w.bytes(std::array<std::uint8_t, 2>{'I', 'I'});
  w.u16(42);
  const std::size_t first_ifd_slot = w.size();
  w.u32(0);
  std::size_t prev_next_slot = first_ifd_slot;
  const std::size_t bytes_per_sample = static_cast<std::size_t>(bits / 8);
  const std::size_t plane = width * height;
  for (std::size_t z = 0; z < depth; ++z) {
    const std::size_t strip_offset = w.size();
    std::vector<std::uint8_t> strip(plane * bytes_per_sample);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::uint32_t v = sample_at(z * plane + i);
      for (std::size_t b = 0; b < bytes_per_sample; ++b) {
        strip[i * bytes_per_sample + b] = static_cast<std::uint8_t>(v >> (8 * b));
      }
    }
    w.bytes(strip);
    w.align();
    std::size_t desc_offset = 0;
    const bool with_desc = z == 0 && !description.empty();
    if (with_desc) {
      desc_offset = w.size();
      std::vector<std::uint8_t> d(description.begin(), description.end());
      d.push_back(0);
      w.bytes(d);
      w.align();
    }
    if (w.size() + 512 > 0xFFFFFFFFu) fail(ErrorCode::kIoFailure, "stack exceeds 4 GiB TIFF limit");
    std::vector<Tag> tags = {
        {kImageWidth, kTypeLong, 1, static_cast<std::uint32_t>(width)},
        {kImageLength, kTypeLong, 1, static_cast<std::uint32_t>(height)},
        {kBitsPerSample, kTypeShort, 1, static_cast<std::uint32_t>(bits)},
        {kCompression, kTypeShort, 1, 1},
        {kPhotometric, kTypeShort, 1, 1},
    };
    if (with_desc) {
      tags.push_back({kImageDescription, kTypeAscii, static_cast<std::uint32_t>(description.size() + 1),
                      static_cast<std::uint32_t>(desc_offset)});
    }
    tags.push_back({kStripOffsets, kTypeLong, 1, static_cast<std::uint32_t>(strip_offset)});
    tags.push_back({kSamplesPerPixel, kTypeShort, 1, 1});
    tags.push_back({kRowsPerStrip, kTypeLong, 1, static_cast<std::uint32_t>(height)});
    tags.push_back({kStripByteCounts, kTypeLong, 1, static_cast<std::uint32_t>(strip.size())});
    tags.push_back({kPlanarConfig, kTypeShort, 1, 1});
    tags.push_back({kSampleFormat, kTypeShort, 1, 1});

    const std::size_t ifd_offset = w.size();
    w.patch32(prev_next_slot, static_cast<std::uint32_t>(ifd_offset));
    w.u16(static_cast<std::uint16_t>(tags.size()));
    for (const auto& t : tags) {
      w.u16(t.id);
      w.u16(t.type);
      w.u32(t.count);
      if (t.type == kTypeShort) {
        w.u16(static_cast<std::uint16_t>(t.value));
        w.u16(0);
      } else {
        w.u32(t.value);
      }
    }
    prev_next_slot = w.size();
    w.u32(0);
  }
  return w.take();
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoFailure, "write failed for " + path.string());
}

std::string describe(const VoxelSize& v) {
  nlohmann::json j = {{"rawscore", 1}, {"voxel_size", {v.x, v.y, v.z}}};
  return j.dump();
}

VoxelSize parse_voxel_size(const std::string& description) {
  VoxelSize v;
  if (description.empty()) return v;
  const auto j = nlohmann::json::parse(description, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("voxel_size")) return v;
  const auto& a = j["voxel_size"];
  if (a.is_array() && a.size() == 3 && a[0].is_number() && a[1].is_number() && a[2].is_number()) {
    v = {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
    if (!(v.x > 0 && v.y > 0 && v.z > 0)) fail(ErrorCode::kCorruptFile, "non-positive voxel size");
  }
  return v;
}

}  // namespace

ImageStack decode_tiff(std::span<const std::uint8_t> bytes) {
  auto pages = read_pages(bytes, false);
  const auto& first = pages.front();
  std::vector<std::uint16_t> data;
  data.reserve(first.samples.size() * pages.size());
  for (const auto& p : pages) {
    for (auto v : p.samples) data.push_back(static_cast<std::uint16_t>(v));
  }
  return ImageStack({first.width, first.height, pages.size()}, first.bits, std::move(data),
                    parse_voxel_size(first.description));
}

std::vector<std::uint8_t> encode_tiff(const ImageStack& stack) {
  const auto& d = stack.dims();
  return encode_pages(d.width, d.height, d.depth, stack.bit_depth(), describe(stack.voxel_size()),
                      [&](std::size_t i) { return static_cast<std::uint32_t>(stack[i]); });
}

ImageStack read_stack(const std::filesystem::path& path) { return decode_tiff(slurp(path)); }

void write_stack(const ImageStack& stack, const std::filesystem::path& path) {
  spill(encode_tiff(stack), path);
}

void write_labels(const LabelMap& labels, const std::filesystem::path& path) {
  const auto& d = labels.dims();
  spill(encode_pages(d.width, d.height, d.depth, 32, "",
                     [&](std::size_t i) { return labels[i]; }),
        path);
}

LabelMap read_labels(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  auto pages = read_pages(bytes, true);
  const auto& first = pages.front();
  std::vector<std::uint32_t> values;
  for (const auto& p : pages) values.insert(values.end(), p.samples.begin(), p.samples.end());
  return LabelMap({first.width, first.height, pages.size()}, std::move(values));
}

}  // namespace rawscore
