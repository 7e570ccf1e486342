// Copyright 2026 The MDC Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mdc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "mdc/errors.hpp"
#include "mdc/image.hpp"
#include "mdc/metrics.hpp"

namespace mdc::harness {
namespace fs = std::filesystem;
namespace {

Tensor pad_to_grid(const Tensor& img) {
  return image::reflect_pad(img, image::round_up(img.dim(1), nn::kDownsample),
                            image::round_up(img.dim(2), nn::kDownsample));
}

void check_input(const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("expected a [3,H,W] image");
  if (img.dim(1) < kMinImageSide || img.dim(2) < kMinImageSide) {
    throw std::invalid_argument("images must be at least " + std::to_string(kMinImageSide) +
                                " pixels on each side");
  }
  if (!all_finite(img)) throw std::invalid_argument("image contains non-finite samples");
}

quant::IndexTensor decode_one(const EncodedDescription& d, const nn::Model& model) {
  const int desc = d.header.desc_id;
  if (d.header.k != model.config().encoder.feature_channels || d.header.l != model.config().levels) {
    throw ModelMismatch("description K/L do not match the model");
  }
  if (d.header.mode == CodingMode::kRaw) return bitstream::deserialize_raw(d);
  nn::ContextCursor cursor(model.entropy_net(desc), d.header.m, d.header.n, d.header.k);
  return bitstream::ac_decode(d, cursor, model.description_checksum(desc));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

const char* mode_name(DecodeMode m) {
  switch (m) {
    case DecodeMode::kCentral: return "central";
    case DecodeMode::kSideA: return "side_a";
    case DecodeMode::kSideB: return "side_b";
    case DecodeMode::kNone: return "none";
  }
  return "?";
}

EncodedPair encode_image(const Tensor& img, const nn::Model& model, CodingMode mode) {
  check_input(img);
  NoGradGuard no_grad;
  const int h = img.dim(1), w = img.dim(2);
  const int k = model.config().encoder.feature_channels;
  nn::EncoderOutput enc = model.encoder()(Var(pad_to_grid(img)));
  EncodedPair out;
  for (int desc = 0; desc < 2; ++desc) {
    const Var& map = desc == 0 ? enc.da : enc.db;
    const Var z = mul(enc.z, quant::expand_importance(map, k));
    const quant::IndexTensor v = quant::hard_quantize(z.value(), model.center_vector(desc));
    const auto header = bitstream::DescriptionHeader::for_image(
        desc, h, w, k, model.config().levels, mode, model.description_checksum(desc));
    EncodedDescription d;
    if (mode == CodingMode::kRaw) {
      d = bitstream::serialize_raw(v, header);
    } else {
      nn::ContextCursor cursor(model.entropy_net(desc), v.m(), v.n(), v.k());
      d = bitstream::ac_encode(v, header, cursor);
    }
    (desc == 0 ? out.a : out.b) = std::move(d);
  }
  return out;
}

Decoded decode_any(const EncodedDescription* a, const EncodedDescription* b,
                   const nn::Model& model, int fallback_h, int fallback_w) {
  if (a && a->header.desc_id != 0) throw CorruptData("first description is not description A");
  if (b && b->header.desc_id != 1) throw CorruptData("second description is not description B");
  Decoded out;
  if (!a && !b) {
    if (fallback_h < 1 || fallback_w < 1) {
      throw std::invalid_argument("no description received and no fallback size given");
    }
    out.image = image::constant(fallback_h, fallback_w, kFallbackGray);
    out.mode = DecodeMode::kNone;
    return out;
  }
  if (a && b) {
    const auto& ha = a->header;
    const auto& hb = b->header;
    if (ha.orig_h != hb.orig_h || ha.orig_w != hb.orig_w || ha.m != hb.m || ha.n != hb.n ||
        ha.k != hb.k || ha.l != hb.l) {
      throw CorruptData("descriptions disagree on image geometry");
    }
  }
  const auto& hdr = a ? a->header : b->header;
  NoGradGuard no_grad;
  auto values = [&](const EncodedDescription& d) {
    return Var(quant::dequantize(decode_one(d, model), model.center_vector(d.header.desc_id)));
  };
  Var y;
  if (a && b) {
    y = model.central_decoder()(concat({values(*a), values(*b)}));
    out.mode = DecodeMode::kCentral;
  } else if (a) {
    y = model.side_decoder(0)(values(*a));
    out.mode = DecodeMode::kSideA;
  } else {
    y = model.side_decoder(1)(values(*b));
    out.mode = DecodeMode::kSideB;
  }
  out.image = image::crop(y.value(), 0, 0, hdr.orig_h, hdr.orig_w);
  return out;
}

Reconstructions reconstruct_all(const Tensor& img, const nn::Model& model) {
  check_input(img);
  NoGradGuard no_grad;
  const int h = img.dim(1), w = img.dim(2);
  nn::PipelineOutput p = nn::forward_pipeline(model, Var(pad_to_grid(img)), quant::QuantMode::kHard);
  Reconstructions r;
  r.central = image::crop(p.y.value(), 0, 0, h, w);
  r.side_a = image::crop(p.ya.value(), 0, 0, h, w);
  r.side_b = image::crop(p.yb.value(), 0, 0, h, w);
  r.va = p.qa.indices;
  r.vb = p.qb.indices;
  r.est_bits_a = p.bits_a.item();
  r.est_bits_b = p.bits_b.item();
  return r;
}

// ---- erasure channel ---------------------------------------------------

void ChannelConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_loss_a) || !prob(p_loss_b)) throw ConfigError("loss probabilities must be in [0,1]");
  if (trials < 1) throw ConfigError("trials must be >= 1");
}

double expected_distortion(double d_central, double d_side_a, double d_side_b, double d_none,
                           double p_a, double p_b) {
  if (!(p_a >= 0.0 && p_a <= 1.0) || !(p_b >= 0.0 && p_b <= 1.0)) {
    throw std::invalid_argument("loss probabilities must be in [0,1]");
  }
  return (1 - p_a) * (1 - p_b) * d_central + (1 - p_a) * p_b * d_side_a +
         p_a * (1 - p_b) * d_side_b + p_a * p_b * d_none;
}

ChannelReport simulate_channel(const std::array<double, 4>& mr, const std::array<double, 4>& ms,
                               const ChannelConfig& ch) {
  ch.validate();
  ChannelReport rep;
  rep.trials = ch.trials;
  rep.mr = mr;
  rep.ms = ms;
  std::mt19937_64 rng(ch.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double s_mr = 0, s2_mr = 0, s_ms = 0, s2_ms = 0;
  for (int64_t t = 0; t < ch.trials; ++t) {
    const bool lost_a = u(rng) < ch.p_loss_a;
    const bool lost_b = u(rng) < ch.p_loss_b;
    const DecodeMode m = !lost_a && !lost_b ? DecodeMode::kCentral
                         : !lost_a          ? DecodeMode::kSideA
                         : !lost_b          ? DecodeMode::kSideB
                                            : DecodeMode::kNone;
    const int i = static_cast<int>(m);
    ++rep.modes[i].count;
    s_mr += mr[i];
    s2_mr += mr[i] * mr[i];
    s_ms += ms[i];
    s2_ms += ms[i] * ms[i];
  }
  const double n = static_cast<double>(ch.trials);
  const double pa = ch.p_loss_a, pb = ch.p_loss_b;
  const std::array<double, 4> expect = {(1 - pa) * (1 - pb), (1 - pa) * pb, pa * (1 - pb),
                                        pa * pb};
  for (int i = 0; i < 4; ++i) {
    rep.modes[i].frequency = static_cast<double>(rep.modes[i].count) / n;
    rep.modes[i].expected_frequency = expect[i];
    rep.modes[i].frequency_se = std::sqrt(expect[i] * (1 - expect[i]) / n);
  }
  auto stat = [&](double s, double s2, const std::array<double, 4>& d) {
    Statistic st;
    st.mean = s / n;
    const double var = n > 1 ? std::max(0.0, (s2 - n * st.mean * st.mean) / (n - 1)) : 0.0;
    st.se = std::sqrt(var / n);
    st.expected = expected_distortion(d[0], d[1], d[2], d[3], pa, pb);
    return st;
  };
  rep.mean_mr = stat(s_mr, s2_mr, mr);
  rep.mean_ms = stat(s_ms, s2_ms, ms);
  return rep;
}

ChannelReport simulate_channel(const Tensor& img, const nn::Model& model, const ChannelConfig& ch) {
  ch.validate();
  const Reconstructions r = reconstruct_all(img, model);
  const Tensor gray = image::constant(img.dim(1), img.dim(2), kFallbackGray);
  const std::array<const Tensor*, 4> decoded = {&r.central, &r.side_a, &r.side_b, &gray};
  std::array<double, 4> mr{}, ms{};
  for (int i = 0; i < 4; ++i) {
    mr[i] = metrics::mr_ssim(img, *decoded[i]);
    ms[i] = metrics::ms_ssim(img, *decoded[i]);
  }
  return simulate_channel(mr, ms, ch);
}

// ---- evaluation --------------------------------------------------------

EvalResult evaluate_images(const std::vector<Tensor>& images, const std::vector<std::string>& names,
                           const nn::Model& model, CodingMode mode) {
  if (images.empty()) throw ConfigError("nothing to evaluate");
  EvalResult res;
  for (size_t i = 0; i < images.size(); ++i) {
    const Tensor& img = images[i];
    const EncodedPair enc = encode_image(img, model, mode);
    const Tensor central = decode_any(&enc.a, &enc.b, model).image;
    const Tensor side_a = decode_any(&enc.a, nullptr, model).image;
    const Tensor side_b = decode_any(nullptr, &enc.b, model).image;
    const double pixels = static_cast<double>(img.dim(1)) * img.dim(2);
    RDPoint p;
    p.name = i < names.size() ? names[i] : "image_" + std::to_string(i);
    p.bpp = 8.0 * static_cast<double>(enc.a.total_bytes() + enc.b.total_bytes()) / pixels;
    p.payload_bpp = 8.0 * static_cast<double>(enc.a.payload.size() + enc.b.payload.size()) / pixels;
    p.side_ms_ssim = 0.5 * (metrics::ms_ssim(img, side_a) + metrics::ms_ssim(img, side_b));
    p.side_mr_ssim = 0.5 * (metrics::mr_ssim(img, side_a) + metrics::mr_ssim(img, side_b));
    p.central_ms_ssim = metrics::ms_ssim(img, central);
    p.central_mr_ssim = metrics::mr_ssim(img, central);
    res.images.push_back(p);
  }
  RDPoint& m = res.mean;
  m.name = "mean";
  for (const RDPoint& p : res.images) {
    m.bpp += p.bpp;
    m.payload_bpp += p.payload_bpp;
    m.side_ms_ssim += p.side_ms_ssim;
    m.side_mr_ssim += p.side_mr_ssim;
    m.central_ms_ssim += p.central_ms_ssim;
    m.central_mr_ssim += p.central_mr_ssim;
  }
  const double inv = 1.0 / static_cast<double>(res.images.size());
  for (double* f : {&m.bpp, &m.payload_bpp, &m.side_ms_ssim, &m.side_mr_ssim, &m.central_ms_ssim,
                    &m.central_mr_ssim}) {
    *f *= inv;
  }
  return res;
}

EvalResult evaluate_dataset(const std::string& dir, const nn::Model& model, CodingMode mode) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (e.is_regular_file() && ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Tensor> images;
  std::vector<std::string> names;
  for (const auto& f : files) {
    try {
      Tensor img = image::read_png(f.string());
      if (img.dim(1) < kMinImageSide || img.dim(2) < kMinImageSide) {
        std::cerr << "warning: skipping " << f.string() << ": smaller than " << kMinImageSide
                  << " pixels\n";
        continue;
      }
      images.push_back(std::move(img));
      names.push_back(f.filename().string());
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
    }
  }
  if (images.empty()) throw ConfigError("no usable images in " + dir);
  return evaluate_images(images, names, model, mode);
}

void write_rd_csv(const std::string& path, const EvalResult& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kRdCsvHeader << "\n";
  auto row = [&](const RDPoint& p) {
    out << p.name << "," << fmt(p.bpp) << "," << fmt(p.payload_bpp) << "," << fmt(p.side_ms_ssim)
        << "," << fmt(p.side_mr_ssim) << "," << fmt(p.central_ms_ssim) << ","
        << fmt(p.central_mr_ssim) << "\n";
  };
  for (const auto& p : r.images) row(p);
  row(r.mean);
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<RDPoint> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != kRdCsvHeader) {
    throw CorruptData("unexpected RD CSV header in " + path);
  }
  std::vector<RDPoint> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw CorruptData("malformed RD CSV row: " + line);
    RDPoint p;
    p.name = cells[0];
    double* fields[] = {&p.bpp, &p.payload_bpp, &p.side_ms_ssim, &p.side_mr_ssim,
                        &p.central_ms_ssim, &p.central_mr_ssim};
    for (int i = 0; i < 6; ++i) *fields[i] = std::stod(cells[i + 1]);
    rows.push_back(p);
  }
  return rows;
}

namespace {

struct Series {
  std::string label, color;
  bool square;
  std::vector<std::pair<double, double>> pts;
  std::pair<double, double> mean;
};

std::string svg_plot(const std::string& title, const std::string& ylabel,
                     const std::vector<Series>& series) {
  constexpr double kW = 640, kH = 480, kL = 70, kR = 20, kT = 40, kB = 60;
  double xmax = 0, ymin = 1, ymax = 0;
  for (const auto& s : series) {
    for (auto [x, y] : s.pts) {
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  xmax = xmax > 0 ? xmax * 1.1 : 1.0;
  ymin = std::floor(std::min(ymin, ymax) * 20 - 1) / 20;
  ymax = std::min(1.0, std::ceil(ymax * 20 + 1) / 20);
  if (ymax <= ymin) ymax = ymin + 0.1;
  auto px = [&](double x) { return kL + x / xmax * (kW - kL - kR); };
  auto py = [&](double y) { return kH - kB - (y - ymin) / (ymax - ymin) * (kH - kT - kB); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n";
  o << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
    << kH - kB << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmax * i / 5, yv = ymin + (ymax - ymin) * i / 5;
    o << "<text x=\"" << px(xv) << "\" y=\"" << kH - kB + 18 << "\" text-anchor=\"middle\">"
      << fmt(std::round(xv * 1000) / 1000) << "</text>\n"
      << "<text x=\"" << kL - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
      << fmt(std::round(yv * 1000) / 1000) << "</text>\n"
      << "<line x1=\"" << kL << "\" y1=\"" << py(yv) << "\" x2=\"" << kW - kR << "\" y2=\""
      << py(yv) << "\" stroke=\"#ddd\"/>\n";
  }
  o << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 15
    << "\" text-anchor=\"middle\">bits per pixel</text>\n"
    << "<text transform=\"translate(18," << (kT + kH - kB) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  int legend = 0;
  for (const auto& s : series) {
    for (auto [x, y] : s.pts) {
      if (s.square) {
        o << "<rect x=\"" << px(x) - 3 << "\" y=\"" << py(y) - 3
          << "\" width=\"6\" height=\"6\" fill=\"" << s.color << "\" fill-opacity=\"0.5\"/>\n";
      } else {
        o << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << s.color
          << "\" fill-opacity=\"0.5\"/>\n";
      }
    }
    o << "<circle cx=\"" << px(s.mean.first) << "\" cy=\"" << py(s.mean.second)
      << "\" r=\"7\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    const double ly = kT + 10 + 18 * legend++;
    o << "<rect x=\"" << kW - kR - 150 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\""
      << s.color << "\"/>\n<text x=\"" << kW - kR - 134 << "\" y=\"" << ly + 1 << "\">" << s.label
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::vector<std::string> plot_rd(const std::string& csv_path, const std::string& out_dir) {
  const std::vector<RDPoint> rows = read_rd_csv(csv_path);
  if (rows.empty()) throw CorruptData("RD CSV has no rows");
  const RDPoint& mean = rows.back();
  const std::vector<RDPoint> images(rows.begin(), rows.end() - 1);
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  for (int metric = 0; metric < 2; ++metric) {
    const bool ms = metric == 0;
    Series side{"side (mean of A, B)", "#1f77b4", false, {}, {}};
    Series central{"central", "#d62728", true, {}, {}};
    for (const auto& p : images) {
      side.pts.emplace_back(p.bpp, ms ? p.side_ms_ssim : p.side_mr_ssim);
      central.pts.emplace_back(p.bpp, ms ? p.central_ms_ssim : p.central_mr_ssim);
    }
    side.mean = {mean.bpp, ms ? mean.side_ms_ssim : mean.side_mr_ssim};
    central.mean = {mean.bpp, ms ? mean.central_ms_ssim : mean.central_mr_ssim};
    const std::string path =
        (fs::path(out_dir) / (ms ? "rd_ms_ssim.svg" : "rd_mr_ssim.svg")).string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << svg_plot(ms ? "MS-SSIM vs rate" : "MR-SSIM vs rate", ms ? "MS-SSIM" : "MR-SSIM",
                    {side, central});
    written.push_back(path);
  }
  return written;
}

}  // namespace mdc::harness
