#include "navil/packing.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "navil/encoder.hpp"

namespace navil {

SpecialTokens SpecialTokens::for_vocab(int vocab) {
  if (vocab < 5) throw std::invalid_argument("vocab must hold at least one text token plus 4 reserved ids");
  return {vocab - 4, vocab - 3, vocab - 2, vocab - 1};
}

bool SpecialTokens::is_special(int id) const {
  return id == begin_of_image || id == end_of_image || id == end_of_line || id == end_of_scale;
}

std::string SpecialTokens::name_of(int id) const {
  if (id == begin_of_image) return "<begin_of_image>";
  if (id == end_of_image) return "<end_of_image>";
  if (id == end_of_line) return "<end_of_line>";
  if (id == end_of_scale) return "<end_of_scale>";
  return "";
}

std::vector<std::pair<int, int>> pyramid_dims(int height, int width, double tau, double area_threshold) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("build_pyramid: tau must lie in (0, 1)");
  if (height <= 0 || width <= 0) throw std::invalid_argument("build_pyramid: empty image");
  std::vector<std::pair<int, int>> dims{{height, width}};
  auto shrink = [tau](int v) {
    const int floored = static_cast<int>(std::floor(v * tau / kPadMultiple)) * kPadMultiple;
    return std::max(kPadMultiple, floored);
  };
  while (true) {
    const auto [h, w] = dims.back();
    const int nh = shrink(h), nw = shrink(w);
    const double area = static_cast<double>(nh) * nw;
    if (area >= static_cast<double>(h) * w) break;
    if (!(area >= area_threshold)) break;
    dims.emplace_back(nh, nw);
  }
  return dims;
}

namespace {

// weights[o] lists (source index, weight) pairs covering output cell o.
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t in, std::size_t out) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = o * scale, hi = (o + 1) * scale;
    for (auto i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) w[o].emplace_back(i, overlap / scale);
    }
  }
  return w;
}

}  // namespace

Tensor area_resize(const Tensor& img, int height, int width) {
  if (img.rank() != 3 || img.dim(2) != 3) throw ShapeError("area_resize: expected H×W×3");
  const std::size_t ih = img.dim(0), iw = img.dim(1);
  const auto oh = static_cast<std::size_t>(height), ow = static_cast<std::size_t>(width);
  const auto wy = area_weights(ih, oh);
  const auto wx = area_weights(iw, ow);
  Tensor tmp({ih, ow, 3});
  for (std::size_t y = 0; y < ih; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (const auto& [sx, a] : wx[x]) {
        for (std::size_t c = 0; c < 3; ++c) tmp[(y * ow + x) * 3 + c] += a * img[(y * iw + sx) * 3 + c];
      }
    }
  }
  Tensor out({oh, ow, 3});
  for (std::size_t y = 0; y < oh; ++y) {
    for (const auto& [sy, a] : wy[y]) {
      for (std::size_t x = 0; x < ow; ++x) {
        for (std::size_t c = 0; c < 3; ++c) out[(y * ow + x) * 3 + c] += a * tmp[(sy * ow + x) * 3 + c];
      }
    }
  }
  return out;
}

ImagePyramid build_pyramid(const Tensor& img, double tau, double area_threshold) {
  Tensor base = pad_image(img);
  const auto dims = pyramid_dims(static_cast<int>(base.dim(0)), static_cast<int>(base.dim(1)), tau, area_threshold);
  ImagePyramid p;
  p.scales.push_back(base);
  for (std::size_t i = 1; i < dims.size(); ++i) {
    p.scales.push_back(area_resize(p.scales.back(), dims[i].first, dims[i].second));
  }
  return p;
}

PackedSequence assemble_sequence(std::span<const ScaleGrid> grids, std::span<const int> caption,
                                 const SpecialTokens& special) {
  if (grids.empty()) throw std::invalid_argument("assemble_sequence: no scales");
  PackedSequence seq;
  auto push_text = [&](int id, bool special_slot, bool target) {
    seq.slots.push_back(Slot{special_slot ? SlotKind::kSpecial : SlotKind::kText, id});
    seq.modality.push_back(Modality::kText);
    seq.loss.push_back(target ? 1 : 0);
  };
  push_text(special.begin_of_image, true, false);
  int visual = 0;
  for (std::size_t s = 0; s < grids.size(); ++s) {
    const auto& g = grids[s];
    if (g.rows <= 0 || g.cols <= 0) throw std::invalid_argument("assemble_sequence: empty scale grid");
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c) {
        seq.slots.push_back(Slot{SlotKind::kVisual, -1, static_cast<int>(s), visual++, r, c});
        seq.modality.push_back(Modality::kVisual);
        seq.loss.push_back(0);
      }
      push_text(special.end_of_line, true, false);
    }
    push_text(special.end_of_scale, true, false);
  }
  push_text(special.end_of_image, true, false);
  for (int id : caption) {
    if (id < 0 || id >= special.first_reserved()) {
      throw std::invalid_argument("assemble_sequence: caption id " + std::to_string(id) + " is not a text token");
    }
    push_text(id, false, true);
  }
  seq.num_visual = visual;
  seq.grids.assign(grids.begin(), grids.end());
  seq.positions.resize(seq.slots.size());
  for (std::size_t i = 0; i < seq.positions.size(); ++i) seq.positions[i] = static_cast<int>(i);
  return seq;
}

PackedSequence assemble_sequence(const ImagePyramid& pyramid, std::span<const Tensor> encoder_outputs,
                                 std::span<const int> caption, const SpecialTokens& special, int patch_stride,
                                 int factor) {
  if (pyramid.scales.size() != encoder_outputs.size()) {
    throw std::invalid_argument("assemble_sequence: one connector output per scale required");
  }
  std::vector<ScaleGrid> grids;
  for (std::size_t s = 0; s < pyramid.scales.size(); ++s) {
    const int unit = patch_stride * factor;
    const int h = static_cast<int>(pyramid.scales[s].dim(0)), w = static_cast<int>(pyramid.scales[s].dim(1));
    if (h % unit != 0 || w % unit != 0) {
      throw std::invalid_argument("assemble_sequence: scale " + std::to_string(s) + " not divisible into tokens");
    }
    ScaleGrid g{h / unit, w / unit};
    if (encoder_outputs[s].rows() != static_cast<std::size_t>(g.rows * g.cols)) {
      throw std::invalid_argument("assemble_sequence: scale " + std::to_string(s) + " has " +
                                  std::to_string(encoder_outputs[s].rows()) + " tokens, grid expects " +
                                  std::to_string(g.rows * g.cols));
    }
    grids.push_back(g);
  }
  return assemble_sequence(grids, caption, special);
}

PackedSequence assemble_text(std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("assemble_text: empty token list");
  PackedSequence seq;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    seq.slots.push_back(Slot{SlotKind::kText, tokens[i]});
    seq.modality.push_back(Modality::kText);
    seq.loss.push_back(i == 0 ? 0 : 1);
    seq.positions.push_back(static_cast<int>(i));
  }
  return seq;
}

void validate_sequence(const PackedSequence& seq, const SpecialTokens& special) {
  const std::size_t n = seq.slots.size();
  if (seq.modality.size() != n || seq.positions.size() != n || seq.loss.size() != n) {
    throw std::invalid_argument("packed sequence: annotation lengths differ from slot count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Slot& s = seq.slots[i];
    const bool visual = s.kind == SlotKind::kVisual;
    if (visual != (seq.modality[i] == Modality::kVisual)) {
      throw std::invalid_argument("packed sequence: modality mask disagrees with slot " + std::to_string(i));
    }
    if (visual && seq.loss[i]) throw std::invalid_argument("packed sequence: visual slot in loss mask");
    if (seq.positions[i] != static_cast<int>(i)) throw std::invalid_argument("packed sequence: positions not consecutive");
  }
  if (seq.grids.empty()) {
    if (seq.num_visual != 0) throw std::invalid_argument("packed sequence: visual tokens without grids");
    return;
  }
  auto expect = [&](std::size_t i, int id, const char* what) {
    if (i >= n || seq.slots[i].kind != SlotKind::kSpecial || seq.slots[i].token != id) {
      throw std::invalid_argument(std::string("packed sequence: expected ") + what + " at slot " + std::to_string(i));
    }
  };
  std::size_t i = 0;
  expect(i++, special.begin_of_image, "<begin_of_image>");
  int visual = 0;
  for (std::size_t s = 0; s < seq.grids.size(); ++s) {
    const auto& g = seq.grids[s];
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c, ++i) {
        if (i >= n || seq.slots[i].kind != SlotKind::kVisual || seq.slots[i].scale != static_cast<int>(s) ||
            seq.slots[i].row != r || seq.slots[i].col != c || seq.slots[i].visual_index != visual) {
          throw std::invalid_argument("packed sequence: visual slot bookkeeping broken at slot " + std::to_string(i));
        }
        ++visual;
      }
      expect(i++, special.end_of_line, "<end_of_line>");
    }
    expect(i++, special.end_of_scale, "<end_of_scale>");
  }
  expect(i++, special.end_of_image, "<end_of_image>");
  if (visual != seq.num_visual) throw std::invalid_argument("packed sequence: visual count mismatch");
  for (; i < n; ++i) {
    if (seq.slots[i].kind != SlotKind::kText || !seq.loss[i]) {
      throw std::invalid_argument("packed sequence: caption slot " + std::to_string(i) + " malformed");
    }
  }
}

std::size_t expected_token_count(int height, int width, double tau, double area_threshold, int factor,
                                 std::size_t caption_len, int patch_stride) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("expected_token_count: empty image");
  const int ph = (height + kPadMultiple - 1) / kPadMultiple * kPadMultiple;
  const int pw = (width + kPadMultiple - 1) / kPadMultiple * kPadMultiple;
  const int unit = patch_stride * factor;
  std::size_t count = 2 + caption_len;
  for (const auto& [h, w] : pyramid_dims(ph, pw, tau, area_threshold)) {
    const auto rows = static_cast<std::size_t>(h / unit), cols = static_cast<std::size_t>(w / unit);
    count += rows * cols + rows + 1;
  }
  return count;
}

void next_token_targets(const PackedSequence& seq, std::vector<int>& targets, std::vector<std::uint8_t>& mask) {
  const std::size_t n = seq.size();
  targets.assign(n, 0);
  mask.assign(n, 0);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (!seq.loss[t + 1]) continue;
    targets[t] = seq.slots[t + 1].token;
    mask[t] = 1;
  }
}

std::vector<int> text_token_ids(const PackedSequence& seq) {
  std::vector<int> ids;
  for (const auto& s : seq.slots) {
    if (s.kind != SlotKind::kVisual) ids.push_back(s.token);
  }
  return ids;
}

std::string sequence_to_json(const PackedSequence& seq, const SpecialTokens& special) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["length"] = seq.size();
  j["num_visual"] = seq.num_visual;
  ordered_json scales = ordered_json::array();
  for (const auto& g : seq.grids) scales.push_back({{"rows", g.rows}, {"cols", g.cols}});
  j["scales"] = scales;
  ordered_json slots = ordered_json::array();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Slot& s = seq.slots[i];
    ordered_json o;
    o["pos"] = seq.positions[i];
    switch (s.kind) {
      case SlotKind::kVisual:
        o["kind"] = "visual";
        o["scale"] = s.scale;
        o["row"] = s.row;
        o["col"] = s.col;
        o["visual_index"] = s.visual_index;
        break;
      case SlotKind::kSpecial:
        o["kind"] = "special";
        o["id"] = s.token;
        o["name"] = special.name_of(s.token);
        break;
      case SlotKind::kText:
        o["kind"] = "text";
        o["id"] = s.token;
        break;
    }
    o["modality"] = seq.modality[i] == Modality::kVisual ? "visual" : "text";
    o["loss"] = static_cast<int>(seq.loss[i]);
    slots.push_back(o);
  }
  // One slot per line keeps golden-file diffs readable.
  std::string out = "{\n";
  out += "  \"length\": " + j["length"].dump() + ",\n";
  out += "  \"num_visual\": " + j["num_visual"].dump() + ",\n";
  out += "  \"scales\": " + j["scales"].dump() + ",\n";
  out += "  \"slots\": [\n";
  for (std::size_t i = 0; i < slots.size(); ++i) {
    out += "    " + slots[i].dump() + (i + 1 < slots.size() ? ",\n" : "\n");
  }
  out += "  ]\n}\n";
  return out;
}

PackedSequence sequence_from_json(const std::string& text, const SpecialTokens& special) {
  const auto j = nlohmann::json::parse(text);
  PackedSequence seq;
  for (const auto& g : j.at("scales")) seq.grids.push_back({g.at("rows").get<int>(), g.at("cols").get<int>()});
  for (const auto& o : j.at("slots")) {
    Slot s;
    const auto kind = o.at("kind").get<std::string>();
    if (kind == "visual") {
      s.kind = SlotKind::kVisual;
      s.scale = o.at("scale").get<int>();
      s.row = o.at("row").get<int>();
      s.col = o.at("col").get<int>();
      s.visual_index = o.at("visual_index").get<int>();
    } else {
      s.kind = kind == "special" ? SlotKind::kSpecial : SlotKind::kText;
      s.token = o.at("id").get<int>();
      if (s.kind == SlotKind::kSpecial && !special.is_special(s.token)) {
        throw std::invalid_argument("sequence_from_json: slot marked special with ordinary id");
      }
    }
    seq.slots.push_back(s);
    seq.modality.push_back(o.at("modality").get<std::string>() == "visual" ? Modality::kVisual : Modality::kText);
    seq.positions.push_back(o.at("pos").get<int>());
    seq.loss.push_back(static_cast<std::uint8_t>(o.at("loss").get<int>()));
  }
  seq.num_visual = j.at("num_visual").get<int>();
  return seq;
}

}  // namespace navil
