#include "parn/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "parn/noise.hpp"
#include "parn/random.hpp"

namespace parn {

using nlohmann::json;

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw IoError("truncated file: " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b{
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

constexpr std::uint32_t kImagesMagic3 = 0x00000803;
constexpr std::uint32_t kImagesMagic4 = 0x00000804;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

DenseTensor load_idx_images(const std::string& images_path,
                            bool grayscale_average) {
  std::ifstream imgs = open_input(images_path);
  const std::uint32_t img_magic = read_u32_be(imgs, images_path);
  if (img_magic != kImagesMagic3 && img_magic != kImagesMagic4) {
    throw FormatError("bad image magic in " + images_path + ": expected " +
                      hex32(kImagesMagic3) + ", found " + hex32(img_magic));
  }
  const int ndim = img_magic == kImagesMagic3 ? 3 : 4;
  Shape dims;
  for (int i = 0; i < ndim; ++i) {
    dims.push_back(static_cast<Index>(read_u32_be(imgs, images_path)));
  }
  const Index total = shape_size(dims);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(total));
  imgs.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (imgs.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError("truncated image payload in " + images_path);
  }

  if (ndim == 4 && grayscale_average) {
    const Index n = dims[0], h = dims[1], w = dims[2], c = dims[3];
    DenseTensor images(Shape{n, h, w});
    for (Index i = 0; i < n * h * w; ++i) {
      double acc = 0.0;
      for (Index ch = 0; ch < c; ++ch) {
        acc += bytes[static_cast<std::size_t>(i * c + ch)];
      }
      images[i] = acc / (255.0 * static_cast<double>(c));
    }
    return images;
  }
  DenseTensor images(dims);
  for (Index i = 0; i < total; ++i) {
    images[i] = bytes[static_cast<std::size_t>(i)] / 255.0;
  }
  return images;
}

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path,
                        bool grayscale_average) {
  LabeledDataset data;
  data.images = load_idx_images(images_path, grayscale_average);

  std::ifstream labs = open_input(labels_path);
  const std::uint32_t lab_magic = read_u32_be(labs, labels_path);
  if (lab_magic != kLabelsMagic) {
    throw FormatError("bad label magic in " + labels_path + ": expected " +
                      hex32(kLabelsMagic) + ", found " + hex32(lab_magic));
  }
  const Index n_labels = static_cast<Index>(read_u32_be(labs, labels_path));
  if (n_labels != data.images.dim(0)) {
    throw ValidationError("image/label count mismatch: " +
                          std::to_string(data.images.dim(0)) + " images vs " +
                          std::to_string(n_labels) + " labels");
  }
  std::vector<unsigned char> label_bytes(static_cast<std::size_t>(n_labels));
  labs.read(reinterpret_cast<char*>(label_bytes.data()),
            static_cast<std::streamsize>(label_bytes.size()));
  if (labs.gcount() != static_cast<std::streamsize>(label_bytes.size())) {
    throw IoError("truncated label payload in " + labels_path);
  }

  data.labels.reserve(static_cast<std::size_t>(n_labels));
  int max_label = 0;
  for (unsigned char b : label_bytes) {
    data.labels.push_back(static_cast<int>(b));
    max_label = std::max(max_label, static_cast<int>(b));
  }
  data.num_classes = std::max(2, max_label + 1);
  return data;
}

void write_idx(const DenseTensor& images, const std::vector<int>& labels,
               const std::string& images_path, const std::string& labels_path) {
  if (images.rank() != 3) {
    throw DimensionError("write_idx: images must be [n,H,W], got " +
                         shape_string(images.shape()));
  }
  if (images.dim(0) != static_cast<Index>(labels.size())) {
    throw ValidationError("write_idx: image/label count mismatch");
  }
  std::ofstream imgs = open_output(images_path);
  write_u32_be(imgs, kImagesMagic3);
  for (Index i = 0; i < 3; ++i) {
    write_u32_be(imgs, static_cast<std::uint32_t>(images.dim(i)));
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(images.size()));
  for (Index i = 0; i < images.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, images[i]));
    bytes[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(std::lround(v * 255.0));
  }
  imgs.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!imgs) throw IoError("failed writing " + images_path);

  std::ofstream labs = open_output(labels_path);
  write_u32_be(labs, kLabelsMagic);
  write_u32_be(labs, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) {
    const char b = static_cast<char>(static_cast<unsigned char>(y));
    labs.write(&b, 1);
  }
  if (!labs) throw IoError("failed writing " + labels_path);
}

// ---------------------------------------------------------------------------
// Synthetic datasets

LabeledDataset synth_2d(Synth2dKind kind, int num_classes, Index n,
                        double noise_std, std::uint64_t seed) {
  if (kind == Synth2dKind::TwoMoons) num_classes = 2;
  if (num_classes < 1) throw ValidationError("synth_2d: need at least 1 class");
  if (n < num_classes) {
    throw ValidationError("synth_2d: n must be >= the class count");
  }
  LabeledDataset data;
  data.num_classes = std::max(num_classes, 2);
  data.images = DenseTensor(Shape{n, 2});
  data.labels.resize(static_cast<std::size_t>(n));

  std::mt19937_64 rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  constexpr double kPi = 3.14159265358979323846;

  for (Index i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % num_classes);
    double x = 0.0, y = 0.0;
    if (kind == Synth2dKind::TwoMoons) {
      const double t = kPi * uni(rng);
      if (cls == 0) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
    } else {
      const double angle = 2.0 * kPi * cls / num_classes;
      x = std::cos(angle);
      y = std::sin(angle);
    }
    x += noise_std * gauss(rng);
    y += noise_std * gauss(rng);
    data.images(i, 0) = x;
    data.images(i, 1) = y;
    data.labels[static_cast<std::size_t>(i)] = cls;
  }
  // rescale each coordinate into [0,1]
  for (Index c = 0; c < 2; ++c) {
    double lo = data.images(0, c), hi = lo;
    for (Index i = 1; i < n; ++i) {
      lo = std::min(lo, data.images(i, c));
      hi = std::max(hi, data.images(i, c));
    }
    for (Index i = 0; i < n; ++i) {
      data.images(i, c) =
          hi > lo ? (data.images(i, c) - lo) / (hi - lo) : 0.5;
    }
  }
  return data;
}

namespace {

// 7-segment glyphs, bit order A..G.
constexpr std::array<std::uint8_t, 10> kDigitSegments = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
};

struct SegmentBox {
  int r0, r1, c0, c1;
};
constexpr std::array<SegmentBox, 7> kSegmentBoxes = {{
    {5, 6, 9, 19},    // A top bar
    {5, 14, 18, 19},  // B upper right
    {14, 23, 18, 19}, // C lower right
    {22, 23, 9, 19},  // D bottom bar
    {14, 23, 9, 10},  // E lower left
    {5, 14, 9, 10},   // F upper left
    {13, 14, 9, 19},  // G middle bar
}};

}  // namespace

LabeledDataset synth_digits(Index n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("synth_digits: n must be >= 1");
  LabeledDataset data;
  data.num_classes = 10;
  data.images = DenseTensor(Shape{n, 28, 28});
  data.labels.resize(static_cast<std::size_t>(n));

  for (Index i = 0; i < n; ++i) {
    const int digit = static_cast<int>(i % 10);
    data.labels[static_cast<std::size_t>(i)] = digit;
    std::mt19937_64 rng = make_rng(seed, static_cast<std::uint64_t>(i));
    std::uniform_int_distribution<int> shift(-2, 2);
    // high stroke contrast keeps the glyphs far (in L-inf) from smoothed
    // noise, like real handwritten digits on a dark background
    std::uniform_real_distribution<double> intensity(0.85, 1.0);
    std::uniform_real_distribution<double> pixel_noise(0.0, 0.05);
    std::uniform_real_distribution<double> blur(0.25, 0.5);
    const int dy = shift(rng), dx = shift(rng);
    const double bright = intensity(rng);

    DenseTensor img(Shape{28, 28});
    for (int s = 0; s < 7; ++s) {
      if (!(kDigitSegments[static_cast<std::size_t>(digit)] >> s & 1)) continue;
      const SegmentBox& box = kSegmentBoxes[static_cast<std::size_t>(s)];
      for (int r = box.r0; r <= box.r1; ++r) {
        for (int c = box.c0; c <= box.c1; ++c) {
          const int rr = r + dy, cc = c + dx;
          if (rr >= 0 && rr < 28 && cc >= 0 && cc < 28) {
            img(rr, cc) = bright;
          }
        }
      }
    }
    for (Index p = 0; p < img.size(); ++p) img[p] += pixel_noise(rng);
    img = gaussian_lowpass(img, blur(rng));
    img.array() = img.array().max(0.0).min(1.0);
    std::copy(img.data(), img.data() + img.size(),
              data.images.data() + i * img.size());
  }
  return data;
}

// ---------------------------------------------------------------------------
// PARN1 container

namespace {

constexpr char kMagic[5] = {'P', 'A', 'R', 'N', '1'};
constexpr int kFormatVersion = 1;

std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Flatten: return "flatten";
  }
  throw StateError("unknown layer kind");
}

LayerKind kind_from(const std::string& s) {
  if (s == "dense") return LayerKind::Dense;
  if (s == "conv") return LayerKind::Conv;
  if (s == "maxpool") return LayerKind::MaxPool;
  if (s == "avgpool") return LayerKind::AvgPool;
  if (s == "flatten") return LayerKind::Flatten;
  throw FormatError("corrupt header: unknown layer kind '" + s + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::Relu: return "relu";
    case Activation::Leaky: return "leaky";
  }
  throw StateError("unknown activation");
}

Activation activation_from(const std::string& s) {
  if (s == "none") return Activation::None;
  if (s == "relu") return Activation::Relu;
  if (s == "leaky") return Activation::Leaky;
  throw FormatError("corrupt header: unknown activation '" + s + "'");
}

void write_container(const std::string& path, json header,
                     const NamedTensors& tensors) {
  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    dir.push_back(std::move(entry));
    offset += static_cast<std::uint64_t>(t.size()) * 4;
  }
  header["format_version"] = kFormatVersion;
  header["tensors"] = std::move(dir);
  const std::string head = header.dump();

  std::ofstream out = open_output(path);
  out.write(kMagic, 5);
  const std::uint32_t len = static_cast<std::uint32_t>(head.size());
  const std::array<unsigned char, 4> lenb{
      static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
      static_cast<unsigned char>(len >> 16),
      static_cast<unsigned char>(len >> 24)};
  out.write(reinterpret_cast<const char*>(lenb.data()), 4);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  std::vector<float> quantized;
  for (const auto& [name, t] : tensors) {
    quantized.resize(static_cast<std::size_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i) {
      quantized[static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
    }
    out.write(reinterpret_cast<const char*>(quantized.data()),
              static_cast<std::streamsize>(quantized.size() * 4));
  }
  if (!out) throw IoError("failed writing " + path);
}

std::pair<json, NamedTensors> read_container(const std::string& path) {
  std::ifstream in = open_input(path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0) {
    throw FormatError("bad magic in " + path + ": expected PARN1, found '" +
                      std::string(magic, in ? 5 : 0) + "'");
  }
  std::array<unsigned char, 4> lenb{};
  in.read(reinterpret_cast<char*>(lenb.data()), 4);
  if (!in) throw IoError("truncated header length in " + path);
  const std::uint32_t len = std::uint32_t(lenb[0]) | (std::uint32_t(lenb[1]) << 8) |
                            (std::uint32_t(lenb[2]) << 16) |
                            (std::uint32_t(lenb[3]) << 24);
  std::string head(len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(len));
  if (in.gcount() != static_cast<std::streamsize>(len)) {
    throw IoError("truncated header in " + path);
  }
  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw FormatError("corrupt header in " + path + ": " + e.what());
  }
  if (!header.contains("format_version") ||
      header["format_version"].get<int>() != kFormatVersion) {
    throw VersionError("unsupported format_version in " + path);
  }
  if (!header.contains("tensors") || !header["tensors"].is_array()) {
    throw FormatError("corrupt header in " + path + ": missing tensor directory");
  }

  std::vector<char> payload(std::istreambuf_iterator<char>(in), {});
  NamedTensors tensors;
  std::uint64_t expected = 0;
  for (const auto& entry : header["tensors"]) {
    const Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::uint64_t bytes = static_cast<std::uint64_t>(shape_size(shape)) * 4;
    if (offset != expected) {
      throw FormatError("corrupt header in " + path + ": bad tensor offset");
    }
    expected += bytes;
    if (expected > payload.size()) {
      throw LengthError("payload length mismatch in " + path + ": header wants " +
                        std::to_string(expected) + " bytes, file has " +
                        std::to_string(payload.size()));
    }
    DenseTensor t(shape);
    const float* src = reinterpret_cast<const float*>(payload.data() + offset);
    for (Index i = 0; i < t.size(); ++i) {
      t[i] = static_cast<double>(src[i]);
    }
    tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  if (expected != payload.size()) {
    throw LengthError("payload length mismatch in " + path + ": header wants " +
                      std::to_string(expected) + " bytes, file has " +
                      std::to_string(payload.size()));
  }
  return {std::move(header), std::move(tensors)};
}

}  // namespace

void save_checkpoint(const ReluNetwork& net, const std::string& path) {
  validate(net);
  json model;
  model["input_shape"] = net.input_shape;
  model["num_classes"] = net.num_classes;
  json layers = json::array();
  NamedTensors tensors;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    json jl;
    jl["kind"] = kind_name(l.kind);
    jl["activation"] = activation_name(l.activation);
    jl["leaky_slope"] = l.leaky_slope;
    jl["stride"] = l.stride;
    jl["pad"] = l.pad;
    jl["window"] = l.window;
    jl["pool_stride"] = l.pool_stride;
    layers.push_back(std::move(jl));
    if (l.kind == LayerKind::Dense || l.kind == LayerKind::Conv) {
      tensors.emplace_back("layer" + std::to_string(i) + ".W", l.W);
      tensors.emplace_back("layer" + std::to_string(i) + ".b", l.b);
    }
  }
  model["layers"] = std::move(layers);
  json header;
  header["model"] = std::move(model);
  write_container(path, std::move(header), tensors);
}

ReluNetwork load_checkpoint(const std::string& path) {
  auto [header, tensors] = read_container(path);
  if (!header.contains("model")) {
    throw FormatError("corrupt header in " + path + ": not a checkpoint");
  }
  const json& model = header["model"];
  ReluNetwork net;
  try {
    net.input_shape = model.at("input_shape").get<Shape>();
    net.num_classes = model.at("num_classes").get<Index>();
    std::size_t t = 0;
    std::size_t i = 0;
    for (const auto& jl : model.at("layers")) {
      Layer l;
      l.kind = kind_from(jl.at("kind").get<std::string>());
      l.activation = activation_from(jl.at("activation").get<std::string>());
      l.leaky_slope = jl.at("leaky_slope").get<double>();
      l.stride = jl.at("stride").get<Index>();
      l.pad = jl.at("pad").get<Index>();
      l.window = jl.at("window").get<Index>();
      l.pool_stride = jl.at("pool_stride").get<Index>();
      if (l.kind == LayerKind::Dense || l.kind == LayerKind::Conv) {
        const std::string w_name = "layer" + std::to_string(i) + ".W";
        if (t + 2 > tensors.size() || tensors[t].first != w_name) {
          throw FormatError("corrupt header in " + path + ": expected tensor " +
                            w_name);
        }
        l.W = std::move(tensors[t++].second);
        l.b = std::move(tensors[t++].second);
      }
      net.layers.push_back(std::move(l));
      ++i;
    }
  } catch (const json::exception& e) {
    throw FormatError("corrupt header in " + path + ": " + e.what());
  }
  validate(net);
  return net;
}

void save_tensors(const NamedTensors& tensors, const std::string& path) {
  write_container(path, json::object(), tensors);
}

NamedTensors load_tensors(const std::string& path) {
  return read_container(path).second;
}

// ---------------------------------------------------------------------------
// Plain-text emitters

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_pgm(const DenseTensor& image, const std::string& path) {
  if (image.rank() != 2) {
    throw DimensionError("write_pgm: image must be [H x W], got " +
                         shape_string(image.shape()));
  }
  std::ofstream out = open_output(path);
  out << "P5\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  for (Index i = 0; i < image.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, image[i]));
    const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_roc_csv(const std::vector<RocPoint>& points,
                   const std::string& path) {
  std::ofstream out = open_output(path);
  out << "fpr,tpr,threshold\n";
  for (const RocPoint& p : points) {
    out << format_double(p.fpr) << ',' << format_double(p.tpr) << ','
        << format_double(p.threshold) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_histogram_csv(const ConfidenceHistogram& hist,
                         const std::string& path) {
  std::ofstream out = open_output(path);
  out << "bin_low,bin_high,count\n";
  const double width =
      (hist.hi - hist.lo) / static_cast<double>(hist.counts.size());
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    const double lo = hist.lo + width * static_cast<double>(i);
    const double hi = i + 1 == hist.counts.size() ? hist.hi : lo + width;
    out << format_double(lo) << ',' << format_double(hi) << ','
        << hist.counts[i] << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_regions_csv(const RegionRaster& raster, const std::string& path) {
  std::ofstream out = open_output(path);
  out << "x,y,region_id\n";
  for (Index j = 0; j < raster.resolution; ++j) {
    for (Index i = 0; i < raster.resolution; ++i) {
      out << format_double(raster.cell_x(i)) << ','
          << format_double(raster.cell_y(j)) << ','
          << raster.region_ids[static_cast<std::size_t>(j * raster.resolution + i)]
          << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream out = open_output(path);
  out << "epoch,ce_loss,conf_loss,test_err,noise_mmc\n";
  for (const EpochRecord& r : log) {
    out << r.epoch << ',' << format_double(r.ce_loss) << ','
        << format_double(r.conf_loss) << ',' << format_double(r.test_error)
        << ',' << format_double(r.noise_mmc) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace parn
