#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "paraug/error.hpp"
#include "paraug/image.hpp"
#include "paraug/json_util.hpp"
#include "paraug/prng.hpp"

namespace paraug {

struct DegradeParams {
  double noise_blend = 0.50;
  std::size_t noise_width = 1024;
  std::size_t noise_height = 1024;
  double downscale = 0.33;
  double upscale = 3.00;
  int blur_radius = 5;
  double blur_sigma = 0.4;
  double contrast = 0.80;
  double brightness = 0.90;
  std::uint64_t noise_seed = 123456789;

  void validate() const {
    if (!(noise_blend >= 0 && noise_blend <= 1)) throw ValidationError("noise_blend must be in [0,1]");
    if (!(downscale > 0) || !(upscale > 0)) throw ValidationError("scales must be positive");
    if (!(blur_sigma > 0)) throw ValidationError("blur_sigma must be positive");
    if (blur_radius < 0) throw ValidationError("blur_radius must be non-negative");
    if (noise_width == 0 || noise_height == 0) throw ValidationError("noise size must be positive");
  }
};

inline void from_json(const Json& j, DegradeParams& p, const std::string& path) {
  StrictObject o(j, path);
  o.get("noise_blend", p.noise_blend);
  o.get("noise_width", p.noise_width);
  o.get("noise_height", p.noise_height);
  o.get("downscale", p.downscale);
  o.get("upscale", p.upscale);
  o.get("blur_radius", p.blur_radius);
  o.get("blur_sigma", p.blur_sigma);
  o.get("contrast", p.contrast);
  o.get("brightness", p.brightness);
  o.get("noise_seed", p.noise_seed);
  o.finish();
  p.validate();
}

inline Json to_json(const DegradeParams& p) {
  return Json{{"noise_blend", p.noise_blend}, {"noise_width", p.noise_width}, {"noise_height", p.noise_height},
              {"downscale", p.downscale},     {"upscale", p.upscale},         {"blur_radius", p.blur_radius},
              {"blur_sigma", p.blur_sigma},   {"contrast", p.contrast},       {"brightness", p.brightness},
              {"noise_seed", p.noise_seed}};
}

// Runs fn(y0, y1) over disjoint row ranges. Every output pixel depends only on
// inputs, so results do not depend on the thread count.
template <typename Fn>
void parallel_rows(std::size_t height, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, unsigned(height)));
  if (threads == 1) {
    fn(std::size_t{0}, height);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (height + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t y0 = t * chunk, y1 = std::min(height, y0 + chunk);
    if (y0 >= y1) break;
    pool.emplace_back([&fn, y0, y1] { fn(y0, y1); });
  }
  for (auto& th : pool) th.join();
}

inline ImageBuffer generate_noise(std::uint64_t seed, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0) throw ValidationError("noise dimensions must be positive");
  SplitMix64 rng(seed);
  ImageBuffer img(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    const float v = static_cast<float>(rng.uniform());
    img.data[3 * i] = img.data[3 * i + 1] = img.data[3 * i + 2] = v;
  }
  return img;
}

// floor with a small tolerance so that e.g. 300 * 0.33 * 3 does not lose a pixel to rounding error.
inline std::size_t scaled_size(std::size_t n, double factor) {
  return static_cast<std::size_t>(std::floor(double(n) * factor + 1e-9));
}

inline ImageBuffer resize_nearest_exact(const ImageBuffer& img, std::size_t ow, std::size_t oh, unsigned threads = 1) {
  if (ow == 0 || oh == 0) throw ValidationError("degenerate resize target");
  ImageBuffer out(ow, oh);
  const double sx = double(img.width) / double(ow), sy = double(img.height) / double(oh);
  std::vector<std::size_t> xs(ow);
  for (std::size_t x = 0; x < ow; ++x)
    xs[x] = std::min(img.width - 1, static_cast<std::size_t>(std::floor((double(x) + 0.5) * sx)));
  parallel_rows(oh, threads, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      const std::size_t syi = std::min(img.height - 1, static_cast<std::size_t>(std::floor((double(y) + 0.5) * sy)));
      for (std::size_t x = 0; x < ow; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(xs[x], syi, c);
    }
  });
  return out;
}

// Half-pixel-centre bilinear with edge clamping.
inline ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t ow, std::size_t oh, unsigned threads = 1) {
  if (ow == 0 || oh == 0) throw ValidationError("degenerate resize target");
  ImageBuffer out(ow, oh);
  struct Tap {
    std::size_t i0, i1;
    double f;
  };
  auto taps = [](std::size_t in, std::size_t o) {
    std::vector<Tap> t(o);
    const double s = double(in) / double(o);
    for (std::size_t k = 0; k < o; ++k) {
      double src = (double(k) + 0.5) * s - 0.5;
      if (src < 0) src = 0;
      std::size_t i0 = static_cast<std::size_t>(std::floor(src));
      if (i0 >= in - 1) {
        t[k] = {in - 1, in - 1, 0.0};
      } else {
        t[k] = {i0, i0 + 1, src - double(i0)};
      }
    }
    return t;
  };
  const auto tx = taps(img.width, ow), ty = taps(img.height, oh);
  parallel_rows(oh, threads, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y) {
      const auto& a = ty[y];
      for (std::size_t x = 0; x < ow; ++x) {
        const auto& b = tx[x];
        for (std::size_t c = 0; c < 3; ++c) {
          const double top = img.at(b.i0, a.i0, c) * (1 - b.f) + img.at(b.i1, a.i0, c) * b.f;
          const double bot = img.at(b.i0, a.i1, c) * (1 - b.f) + img.at(b.i1, a.i1, c) * b.f;
          out.at(x, y, c) = static_cast<float>(top * (1 - a.f) + bot * a.f);
        }
      }
    }
  });
  return out;
}

inline double soft_light(double cb, double cs) {
  if (cs <= 0.5) return cb - (1 - 2 * cs) * cb * (1 - cb);
  const double d = cb <= 0.25 ? ((16 * cb - 12) * cb + 4) * cb : std::sqrt(cb);
  return cb + (2 * cs - 1) * (d - cb);
}

inline ImageBuffer soft_light_blend(const ImageBuffer& base, const ImageBuffer& noise, double t, unsigned threads = 1) {
  if (!(t >= 0 && t <= 1)) throw ValidationError("blend factor must be in [0,1]");
  const ImageBuffer* n = &noise;
  ImageBuffer resized;
  if (noise.width != base.width || noise.height != base.height) {
    resized = resize_nearest_exact(noise, base.width, base.height, threads);
    n = &resized;
  }
  if (t == 0) return base;
  ImageBuffer out(base.width, base.height);
  parallel_rows(base.height, threads, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t i = y0 * base.width * 3; i < y1 * base.width * 3; ++i) {
      const double a = base.data[i], s = soft_light(a, n->data[i]);
      out.data[i] = static_cast<float>(std::clamp((1 - t) * a + t * s, 0.0, 1.0));
    }
  });
  return out;
}

inline ImageBuffer pixelate(const ImageBuffer& img, double down, double up, unsigned threads = 1) {
  const std::size_t mw = scaled_size(img.width, down), mh = scaled_size(img.height, down);
  if (mw == 0 || mh == 0) throw ValidationError("pixelate: intermediate size is degenerate");
  const std::size_t ow = scaled_size(mw, up), oh = scaled_size(mh, up);
  if (ow == 0 || oh == 0) throw ValidationError("pixelate: output size is degenerate");
  return resize_bilinear(resize_nearest_exact(img, mw, mh, threads), ow, oh, threads);
}

inline std::vector<double> gaussian_kernel(int radius, double sigma) {
  if (!(sigma > 0)) throw ValidationError("sigma must be positive");
  std::vector<double> k(std::size_t(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[std::size_t(i + radius)] = std::exp(-double(i * i) / (2 * sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

inline ImageBuffer gaussian_blur(const ImageBuffer& img, int radius, double sigma, unsigned threads = 1) {
  const auto k = gaussian_kernel(radius, sigma);
  const auto W = std::ptrdiff_t(img.width), H = std::ptrdiff_t(img.height);
  ImageBuffer tmp(img.width, img.height), out(img.width, img.height);
  parallel_rows(img.height, threads, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y)
      for (std::ptrdiff_t x = 0; x < W; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          double acc = 0;
          for (int i = -radius; i <= radius; ++i)
            acc += k[std::size_t(i + radius)] * img.at(std::size_t(std::clamp<std::ptrdiff_t>(x + i, 0, W - 1)), y, c);
          tmp.at(std::size_t(x), y, c) = static_cast<float>(acc);
        }
  });
  parallel_rows(img.height, threads, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          double acc = 0;
          for (int i = -radius; i <= radius; ++i)
            acc += k[std::size_t(i + radius)] *
                   tmp.at(x, std::size_t(std::clamp<std::ptrdiff_t>(std::ptrdiff_t(y) + i, 0, H - 1)), c);
          out.at(x, y, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
  });
  return out;
}

inline ImageBuffer brightness_contrast(const ImageBuffer& img, double contrast, double brightness, unsigned threads = 1) {
  ImageBuffer out(img.width, img.height);
  parallel_rows(img.height, threads, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t i = y0 * img.width * 3; i < y1 * img.width * 3; ++i)
      out.data[i] = static_cast<float>(std::clamp(((double(img.data[i]) - 0.5) * contrast + 0.5) * brightness, 0.0, 1.0));
  });
  return out;
}

inline ImageBuffer degrade_chain(const ImageBuffer& img, const DegradeParams& p, unsigned threads = 1) {
  p.validate();
  ImageBuffer cur = img;
  if (p.noise_blend > 0) {
    const auto noise = generate_noise(p.noise_seed, p.noise_width, p.noise_height);
    cur = soft_light_blend(cur, noise, p.noise_blend, threads);
  }
  cur = pixelate(cur, p.downscale, p.upscale, threads);
  cur = gaussian_blur(cur, p.blur_radius, p.blur_sigma, threads);
  return brightness_contrast(cur, p.contrast, p.brightness, threads);
}

}  // namespace paraug
