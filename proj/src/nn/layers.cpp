#include "segdepth/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "blas.hpp"

namespace segdepth::nn {

namespace {

// Upper bound on im2col buffer elements; chunks of the batch are lowered at once.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

template <typename T>
void require_channels(const Tensor<T>& x, int channels, const char* who) {
  if (x.c() != channels) throw std::invalid_argument(std::string(who) + ": channel count mismatch");
}

template <typename T>
Tensor<T> he_normal(int out, int in, int kh, int kw, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor<T> w(out, in, kh, kw);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(dist(rng));
  return w;
}

// Source index tables for one spatial axis of a replicate-padded convolution.
std::vector<int> tap_indices(int in, int out, int kernel, int stride, int pad) {
  std::vector<int> idx(static_cast<std::size_t>(kernel) * out);
  for (int k = 0; k < kernel; ++k)
    for (int o = 0; o < out; ++o) idx[static_cast<std::size_t>(k) * out + o] = clamp_index(o * stride + k - pad, in);
  return idx;
}

// For stride 1, output columns [lo, hi) read unclamped input columns ox + kx - pad.
struct Lowering {
  int kernel, ho, wo;
  std::vector<int> ys, xs;
  int pad = 0, lo = 1, hi = 0;
};

Lowering make_lowering(int h, int w, int ho, int wo, int kernel, int stride, int pad) {
  Lowering l{kernel, ho, wo, tap_indices(h, ho, kernel, stride, pad), tap_indices(w, wo, kernel, stride, pad)};
  if (stride == 1 && wo == w) {
    l.pad = pad;
    l.lo = pad;
    l.hi = w - (kernel - 1 - pad);
  }
  return l;
}

template <typename T>
void im2col(const Tensor<T>& x, int n0, int nc, const Lowering& l, T* col) {
  const std::size_t howo = static_cast<std::size_t>(l.ho) * l.wo;
  const std::size_t ncols = howo * nc;
  const int k = l.kernel;
  for (int ci = 0; ci < x.c(); ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * ncols;
        const int* xs = l.xs.data() + static_cast<std::size_t>(kx) * l.wo;
        for (int s = 0; s < nc; ++s) {
          const T* src = x.plane_ptr(n0 + s, ci);
          T* dst = row + s * howo;
          for (int oy = 0; oy < l.ho; ++oy) {
            const T* src_row = src + static_cast<std::size_t>(l.ys[static_cast<std::size_t>(ky) * l.ho + oy]) * x.w();
            T* dst_row = dst + static_cast<std::size_t>(oy) * l.wo;
            if (l.lo <= l.hi) {
              for (int ox = 0; ox < l.lo; ++ox) dst_row[ox] = src_row[xs[ox]];
              std::memcpy(dst_row + l.lo, src_row + l.lo + kx - l.pad, static_cast<std::size_t>(l.hi - l.lo) * sizeof(T));
              for (int ox = l.hi; ox < l.wo; ++ox) dst_row[ox] = src_row[xs[ox]];
            } else {
              for (int ox = 0; ox < l.wo; ++ox) dst_row[ox] = src_row[xs[ox]];
            }
          }
        }
      }
}

template <typename T>
void col2im(const T* col, int n0, int nc, const Lowering& l, Tensor<T>& dx) {
  const std::size_t howo = static_cast<std::size_t>(l.ho) * l.wo;
  const std::size_t ncols = howo * nc;
  const int k = l.kernel;
  for (int ci = 0; ci < dx.c(); ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * ncols;
        const int* xs = l.xs.data() + static_cast<std::size_t>(kx) * l.wo;
        for (int s = 0; s < nc; ++s) {
          T* dst = dx.plane_ptr(n0 + s, ci);
          const T* src = row + s * howo;
          for (int oy = 0; oy < l.ho; ++oy) {
            T* dst_row = dst + static_cast<std::size_t>(l.ys[static_cast<std::size_t>(ky) * l.ho + oy]) * dx.w();
            const T* src_row = src + static_cast<std::size_t>(oy) * l.wo;
            if (l.lo <= l.hi) {
              for (int ox = 0; ox < l.lo; ++ox) dst_row[xs[ox]] += src_row[ox];
              T* mid = dst_row + l.lo + kx - l.pad;
              for (int ox = l.lo; ox < l.hi; ++ox) mid[ox - l.lo] += src_row[ox];
              for (int ox = l.hi; ox < l.wo; ++ox) dst_row[xs[ox]] += src_row[ox];
            } else {
              for (int ox = 0; ox < l.wo; ++ox) dst_row[xs[ox]] += src_row[ox];
            }
          }
        }
      }
}

int chunk_samples(std::size_t rows, std::size_t howo, int n) {
  const std::size_t per = std::max<std::size_t>(1, rows * howo);
  return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / per, 1, static_cast<std::size_t>(std::max(n, 1))));
}

// Moves a [channels x (nc * plane)] matrix into / out of NCHW sample order.
template <typename T>
void matrix_to_nchw(const T* mat, int n0, int nc, Tensor<T>& y) {
  const std::size_t pl = y.plane();
  for (int s = 0; s < nc; ++s)
    for (int c = 0; c < y.c(); ++c)
      std::memcpy(y.plane_ptr(n0 + s, c), mat + static_cast<std::size_t>(c) * nc * pl + s * pl, pl * sizeof(T));
}

template <typename T>
void nchw_to_matrix(const Tensor<T>& y, int n0, int nc, T* mat) {
  const std::size_t pl = y.plane();
  for (int s = 0; s < nc; ++s)
    for (int c = 0; c < y.c(); ++c)
      std::memcpy(mat + static_cast<std::size_t>(c) * nc * pl + s * pl, y.plane_ptr(n0 + s, c), pl * sizeof(T));
}

struct AxisMap {
  std::vector<int> i0, i1;
  std::vector<double> frac;
};

AxisMap bilinear_axis(int in, int out) {
  AxisMap m;
  m.i0.resize(static_cast<std::size_t>(out));
  m.i1.resize(static_cast<std::size_t>(out));
  m.frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = std::max(0.0, (o + 0.5) * scale - 0.5);
    const int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
    const auto u = static_cast<std::size_t>(o);
    m.i0[u] = i0;
    m.i1[u] = std::min(i0 + 1, in - 1);
    m.frac[u] = src - i0;
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, bool bias, std::mt19937_64& rng)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(kernel / 2), has_bias_(bias) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1)
    throw std::invalid_argument("Conv2d: invalid geometry");
  weight_ = Parameter<T>(he_normal<T>(out_, in_, kernel_, kernel_, in_ * kernel_ * kernel_, rng));
  bias_ = Parameter<T>(Tensor<T>(1, out_, 1, 1));
}

template <typename T>
Tensor<T> Conv2d<T>::apply(const Tensor<T>& x) const {
  require_channels(x, in_, "Conv2d");
  const int ho = out_size(x.h()), wo = out_size(x.w());
  if (ho < 1 || wo < 1) throw std::invalid_argument("Conv2d: input smaller than kernel");
  Tensor<T> y(x.n(), out_, ho, wo);
  const Lowering low = make_lowering(x.h(), x.w(), ho, wo, kernel_, stride_, pad_);
  const int krows = in_ * kernel_ * kernel_;
  const std::size_t howo = static_cast<std::size_t>(ho) * wo;
  const int chunk = chunk_samples(static_cast<std::size_t>(krows), howo, x.n());
  std::vector<T> col, ymat;

  for (int n0 = 0; n0 < x.n(); n0 += chunk) {
    const int nc = std::min(chunk, x.n() - n0);
    const int ncols = static_cast<int>(howo) * nc;
    const bool direct = kernel_ == 1 && stride_ == 1 && nc == 1;
    const T* colp = x.plane_ptr(n0, 0);
    if (!direct) {
      col.resize(static_cast<std::size_t>(krows) * ncols);
      im2col(x, n0, nc, low, col.data());
      colp = col.data();
    }
    T* yp = y.plane_ptr(n0, 0);
    if (nc > 1) {
      ymat.resize(static_cast<std::size_t>(out_) * ncols);
      yp = ymat.data();
    }
    blas::gemm(false, false, out_, ncols, krows, T(1), weight_.value.data(), krows, colp, ncols, T(0), yp, ncols);
    if (nc > 1) matrix_to_nchw(ymat.data(), n0, nc, y);
  }
  if (has_bias_)
    for (int n = 0; n < y.n(); ++n)
      for (int c = 0; c < out_; ++c) {
        T* p = y.plane_ptr(n, c);
        const T b = bias_.value[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < howo; ++i) p[i] += b;
      }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  input_ = x;
  return apply(x);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  const Tensor<T>& x = input_;
  const int ho = out_size(x.h()), wo = out_size(x.w());
  if (dy.n() != x.n() || dy.c() != out_ || dy.h() != ho || dy.w() != wo)
    throw std::invalid_argument("Conv2d::backward: gradient shape mismatch");
  Tensor<T> dx(x.n(), in_, x.h(), x.w());
  const Lowering low = make_lowering(x.h(), x.w(), ho, wo, kernel_, stride_, pad_);
  const int krows = in_ * kernel_ * kernel_;
  const std::size_t howo = static_cast<std::size_t>(ho) * wo;
  const int chunk = chunk_samples(static_cast<std::size_t>(krows), howo, x.n());
  std::vector<T> col, dcol, dymat;

  for (int n0 = 0; n0 < x.n(); n0 += chunk) {
    const int nc = std::min(chunk, x.n() - n0);
    const int ncols = static_cast<int>(howo) * nc;
    const bool direct = kernel_ == 1 && stride_ == 1 && nc == 1;
    const T* dyp = dy.plane_ptr(n0, 0);
    if (nc > 1) {
      dymat.resize(static_cast<std::size_t>(out_) * ncols);
      nchw_to_matrix(dy, n0, nc, dymat.data());
      dyp = dymat.data();
    }
    const T* colp = x.plane_ptr(n0, 0);
    if (!direct) {
      col.resize(static_cast<std::size_t>(krows) * ncols);
      im2col(x, n0, nc, low, col.data());
      colp = col.data();
    }
    blas::gemm(false, true, out_, krows, ncols, T(1), dyp, ncols, colp, ncols, T(1), weight_.grad.data(), krows);
    if (has_bias_)
      for (int c = 0; c < out_; ++c) {
        const T* row = dyp + static_cast<std::size_t>(c) * ncols;
        T acc = T(0);
        for (int i = 0; i < ncols; ++i) acc += row[i];
        bias_.grad[static_cast<std::size_t>(c)] += acc;
      }
    if (direct) {
      blas::gemm(true, false, krows, ncols, out_, T(1), weight_.value.data(), krows, dyp, ncols, T(0),
                 dx.plane_ptr(n0, 0), ncols);
    } else {
      dcol.resize(static_cast<std::size_t>(krows) * ncols);
      blas::gemm(true, false, krows, ncols, out_, T(1), weight_.value.data(), krows, dyp, ncols, T(0), dcol.data(),
                 ncols);
      col2im(dcol.data(), n0, nc, low, dx);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ConvTranspose2x2

template <typename T>
ConvTranspose2x2<T>::ConvTranspose2x2(int in_channels, int out_channels, std::mt19937_64& rng)
    : in_(in_channels), out_(out_channels) {
  weight_ = Parameter<T>(he_normal<T>(in_, out_, 2, 2, in_, rng));
  bias_ = Parameter<T>(Tensor<T>(1, out_, 1, 1));
}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::apply(const Tensor<T>& x) const {
  require_channels(x, in_, "ConvTranspose2x2");
  const int h = x.h(), w = x.w();
  const int hw = h * w, rows = out_ * 4;
  Tensor<T> y(x.n(), out_, 2 * h, 2 * w);
  std::vector<T> z(static_cast<std::size_t>(rows) * hw);
  for (int n = 0; n < x.n(); ++n) {
    blas::gemm(true, false, rows, hw, in_, T(1), weight_.value.data(), rows, x.plane_ptr(n, 0), hw, T(0), z.data(), hw);
    for (int co = 0; co < out_; ++co) {
      T* yp = y.plane_ptr(n, co);
      const T b = bias_.value[static_cast<std::size_t>(co)];
      for (int a = 0; a < 2; ++a)
        for (int bb = 0; bb < 2; ++bb) {
          const T* zr = z.data() + static_cast<std::size_t>(co * 4 + a * 2 + bb) * hw;
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
              yp[static_cast<std::size_t>(2 * i + a) * (2 * w) + 2 * j + bb] = zr[i * w + j] + b;
        }
    }
  }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::forward(const Tensor<T>& x) {
  input_ = x;
  return apply(x);
}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::backward(const Tensor<T>& dy) {
  const Tensor<T>& x = input_;
  const int h = x.h(), w = x.w();
  const int hw = h * w, rows = out_ * 4;
  if (dy.n() != x.n() || dy.c() != out_ || dy.h() != 2 * h || dy.w() != 2 * w)
    throw std::invalid_argument("ConvTranspose2x2::backward: gradient shape mismatch");
  Tensor<T> dx(x.n(), in_, h, w);
  std::vector<T> dz(static_cast<std::size_t>(rows) * hw);
  for (int n = 0; n < x.n(); ++n) {
    for (int co = 0; co < out_; ++co) {
      const T* dyp = dy.plane_ptr(n, co);
      T acc = T(0);
      for (int a = 0; a < 2; ++a)
        for (int bb = 0; bb < 2; ++bb) {
          T* zr = dz.data() + static_cast<std::size_t>(co * 4 + a * 2 + bb) * hw;
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
              const T g = dyp[static_cast<std::size_t>(2 * i + a) * (2 * w) + 2 * j + bb];
              zr[i * w + j] = g;
              acc += g;
            }
        }
      bias_.grad[static_cast<std::size_t>(co)] += acc;
    }
    blas::gemm(false, true, in_, rows, hw, T(1), x.plane_ptr(n, 0), hw, dz.data(), hw, T(1), weight_.grad.data(), rows);
    blas::gemm(false, false, in_, hw, rows, T(1), weight_.value.data(), rows, dz.data(), hw, T(0), dx.plane_ptr(n, 0),
               hw);
  }
  return dx;
}

// ---------------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = Parameter<T>(Tensor<T>(1, channels, 1, 1, T(1)));
  beta_ = Parameter<T>(Tensor<T>(1, channels, 1, 1, T(0)));
  running_mean_ = Tensor<T>(1, channels, 1, 1, T(0));
  running_var_ = Tensor<T>(1, channels, 1, 1, T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::apply(const Tensor<T>& x) const {
  require_channels(x, channels_, "BatchNorm2d");
  Tensor<T> y(x.n(), x.c(), x.h(), x.w());
  const std::size_t pl = x.plane();
  for (int c = 0; c < channels_; ++c) {
    const auto u = static_cast<std::size_t>(c);
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_[u]) + eps_));
    const T scale = gamma_.value[u] * inv;
    const T shift = beta_.value[u] - running_mean_[u] * scale;
    for (int n = 0; n < x.n(); ++n) {
      const T* xp = x.plane_ptr(n, c);
      T* yp = y.plane_ptr(n, c);
      for (std::size_t i = 0; i < pl; ++i) yp[i] = xp[i] * scale + shift;
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  require_channels(x, channels_, "BatchNorm2d");
  cached_mode_ = mode;
  xhat_ = Tensor<T>(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(static_cast<std::size_t>(channels_), T(0));
  Tensor<T> y(x.n(), x.c(), x.h(), x.w());
  const std::size_t pl = x.plane();
  const double count = static_cast<double>(pl) * x.n();

  for (int c = 0; c < channels_; ++c) {
    const auto u = static_cast<std::size_t>(c);
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const T* xp = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < pl; ++i) s += xp[i];
      }
      mean = s / count;
      double ss = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const T* xp = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < pl; ++i) {
          const double d = xp[i] - mean;
          ss += d * d;
        }
      }
      var = ss / count;
      const double unbiased = count > 1.0 ? ss / (count - 1.0) : var;
      running_mean_[u] = static_cast<T>((1.0 - momentum_) * running_mean_[u] + momentum_ * mean);
      running_var_[u] = static_cast<T>((1.0 - momentum_) * running_var_[u] + momentum_ * unbiased);
    } else {
      mean = running_mean_[u];
      var = running_var_[u];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
    const T m = static_cast<T>(mean);
    inv_std_[u] = inv;
    const T g = gamma_.value[u], b = beta_.value[u];
    for (int n = 0; n < x.n(); ++n) {
      const T* xp = x.plane_ptr(n, c);
      T* hp = xhat_.plane_ptr(n, c);
      T* yp = y.plane_ptr(n, c);
      for (std::size_t i = 0; i < pl; ++i) {
        hp[i] = (xp[i] - m) * inv;
        yp[i] = hp[i] * g + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& dy) {
  if (!dy.same_shape(xhat_)) throw std::invalid_argument("BatchNorm2d::backward: gradient shape mismatch");
  Tensor<T> dx(dy.n(), dy.c(), dy.h(), dy.w());
  const std::size_t pl = dy.plane();
  const double count = static_cast<double>(pl) * dy.n();
  for (int c = 0; c < channels_; ++c) {
    const auto u = static_cast<std::size_t>(c);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const T* g = dy.plane_ptr(n, c);
      const T* h = xhat_.plane_ptr(n, c);
      for (std::size_t i = 0; i < pl; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += static_cast<double>(g[i]) * h[i];
      }
    }
    gamma_.grad[u] += static_cast<T>(sum_dy_xhat);
    beta_.grad[u] += static_cast<T>(sum_dy);
    const T scale = gamma_.value[u] * inv_std_[u];
    if (cached_mode_ == Mode::Train) {
      const T mean_dy = static_cast<T>(sum_dy / count);
      const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / count);
      for (int n = 0; n < dy.n(); ++n) {
        const T* g = dy.plane_ptr(n, c);
        const T* h = xhat_.plane_ptr(n, c);
        T* d = dx.plane_ptr(n, c);
        for (std::size_t i = 0; i < pl; ++i) d[i] = scale * (g[i] - mean_dy - h[i] * mean_dy_xhat);
      }
    } else {
      for (int n = 0; n < dy.n(); ++n) {
        const T* g = dy.plane_ptr(n, c);
        T* d = dx.plane_ptr(n, c);
        for (std::size_t i = 0; i < pl; ++i) d[i] = scale * g[i];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor<T> ReLU<T>::apply(const Tensor<T>& x) const {
  Tensor<T> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] > T(0) ? y[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  output_ = apply(x);
  return output_;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) {
  if (!dy.same_shape(output_)) throw std::invalid_argument("ReLU::backward: gradient shape mismatch");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(output_[i] > T(0))) dx[i] = T(0);
  return dx;
}

// ---------------------------------------------------------------- MaxPool2x2

namespace {

template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
  const int ho = x.h() / 2, wo = x.w() / 2;
  if (ho < 1 || wo < 1) throw std::invalid_argument("MaxPool2x2: input smaller than 2x2");
  Tensor<T> y(x.n(), x.c(), ho, wo);
  if (argmax) argmax->resize(y.size());
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* xp = x.plane_ptr(n, c);
      T* yp = y.plane_ptr(n, c);
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j, ++o) {
          std::uint32_t best = static_cast<std::uint32_t>(2 * i * x.w() + 2 * j);
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
              const auto idx = static_cast<std::uint32_t>((2 * i + a) * x.w() + 2 * j + b);
              if (xp[idx] > xp[best]) best = idx;
            }
          yp[i * wo + j] = xp[best];
          if (argmax) (*argmax)[o] = best;
        }
    }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> MaxPool2x2<T>::apply(const Tensor<T>& x) const {
  return max_pool(x, nullptr);
}

template <typename T>
Tensor<T> MaxPool2x2<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape();
  return max_pool(x, &argmax_);
}

template <typename T>
Tensor<T> MaxPool2x2<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
  if (dy.size() != argmax_.size()) throw std::invalid_argument("MaxPool2x2::backward: gradient shape mismatch");
  const std::size_t pl = dy.plane();
  std::size_t o = 0;
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      T* d = dx.plane_ptr(n, c);
      const T* g = dy.plane_ptr(n, c);
      for (std::size_t i = 0; i < pl; ++i, ++o) d[argmax_[o]] += g[i];
    }
  return dx;
}

// ---------------------------------------------------------------- UpsampleBilinear

template <typename T>
Tensor<T> UpsampleBilinear<T>::apply(const Tensor<T>& x, int out_h, int out_w) const {
  const AxisMap ym = bilinear_axis(x.h(), out_h), xm = bilinear_axis(x.w(), out_w);
  Tensor<T> y(x.n(), x.c(), out_h, out_w);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* xp = x.plane_ptr(n, c);
      T* yp = y.plane_ptr(n, c);
      for (int i = 0; i < out_h; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const T fy = static_cast<T>(ym.frac[ui]);
        const T* r0 = xp + static_cast<std::size_t>(ym.i0[ui]) * x.w();
        const T* r1 = xp + static_cast<std::size_t>(ym.i1[ui]) * x.w();
        for (int j = 0; j < out_w; ++j) {
          const auto uj = static_cast<std::size_t>(j);
          const T fx = static_cast<T>(xm.frac[uj]);
          const int j0 = xm.i0[uj], j1 = xm.i1[uj];
          const T top = r0[j0] + fx * (r0[j1] - r0[j0]);
          const T bot = r1[j0] + fx * (r1[j1] - r1[j0]);
          yp[static_cast<std::size_t>(i) * out_w + j] = top + fy * (bot - top);
        }
      }
    }
  return y;
}

template <typename T>
Tensor<T> UpsampleBilinear<T>::forward(const Tensor<T>& x, int out_h, int out_w) {
  in_shape_ = x.shape();
  return apply(x, out_h, out_w);
}

template <typename T>
Tensor<T> UpsampleBilinear<T>::backward(const Tensor<T>& dy) {
  const int h = in_shape_[2], w = in_shape_[3];
  const AxisMap ym = bilinear_axis(h, dy.h()), xm = bilinear_axis(w, dy.w());
  Tensor<T> dx(in_shape_[0], in_shape_[1], h, w);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      const T* g = dy.plane_ptr(n, c);
      T* d = dx.plane_ptr(n, c);
      for (int i = 0; i < dy.h(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const T fy = static_cast<T>(ym.frac[ui]);
        T* r0 = d + static_cast<std::size_t>(ym.i0[ui]) * w;
        T* r1 = d + static_cast<std::size_t>(ym.i1[ui]) * w;
        for (int j = 0; j < dy.w(); ++j) {
          const auto uj = static_cast<std::size_t>(j);
          const T fx = static_cast<T>(xm.frac[uj]);
          const int j0 = xm.i0[uj], j1 = xm.i1[uj];
          const T v = g[static_cast<std::size_t>(i) * dy.w() + j];
          const T top = v * (T(1) - fy), bot = v * fy;
          r0[j0] += top * (T(1) - fx);
          r0[j1] += top * fx;
          r1[j0] += bot * (T(1) - fx);
          r1[j1] += bot * fx;
        }
      }
    }
  return dx;
}

// ---------------------------------------------------------------- FitToSize

template <typename T>
Tensor<T> FitToSize<T>::apply(const Tensor<T>& x, int out_h, int out_w) const {
  Tensor<T> y(x.n(), x.c(), out_h, out_w);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) y.at(n, c, i, j) = x.at(n, c, std::min(i, x.h() - 1), std::min(j, x.w() - 1));
  return y;
}

template <typename T>
Tensor<T> FitToSize<T>::forward(const Tensor<T>& x, int out_h, int out_w) {
  in_shape_ = x.shape();
  return apply(x, out_h, out_w);
}

template <typename T>
Tensor<T> FitToSize<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c)
      for (int i = 0; i < dy.h(); ++i)
        for (int j = 0; j < dy.w(); ++j)
          dx.at(n, c, std::min(i, dx.h() - 1), std::min(j, dx.w() - 1)) += dy.at(n, c, i, j);
  return dx;
}

// ---------------------------------------------------------------- MedianFilter

template <typename T>
MedianFilter<T>::MedianFilter(int kernel) : kernel_(kernel) {
  if (kernel < 1) throw std::invalid_argument("MedianFilter: kernel must be >= 1");
}

template <typename T>
Tensor<T> MedianFilter<T>::run(const Tensor<T>& x, std::vector<std::uint32_t>* selected) const {
  const int k = kernel_;
  const int before = k / 2;
  const int window = k * k;
  const int rank = (window + 1) / 2 - 1;  // 0-based rank ceil(k^2 / 2) - 1
  Tensor<T> y(x.n(), x.c(), x.h(), x.w());
  if (selected) selected->resize(y.size());
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(window));
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* xp = x.plane_ptr(n, c);
      T* yp = y.plane_ptr(n, c);
      const auto less = [xp](std::uint32_t a, std::uint32_t b) { return xp[a] < xp[b] || (xp[a] == xp[b] && a < b); };
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j, ++o) {
          std::size_t t = 0;
          for (int a = 0; a < k; ++a) {
            const int r = clamp_index(i - before + a, x.h());
            for (int b = 0; b < k; ++b)
              idx[t++] = static_cast<std::uint32_t>(r * x.w() + clamp_index(j - before + b, x.w()));
          }
          std::nth_element(idx.begin(), idx.begin() + rank, idx.end(), less);
          const std::uint32_t pick = idx[static_cast<std::size_t>(rank)];
          yp[static_cast<std::size_t>(i) * x.w() + j] = xp[pick];
          if (selected) (*selected)[o] = pick;
        }
    }
  return y;
}

template <typename T>
Tensor<T> MedianFilter<T>::apply(const Tensor<T>& x) const {
  return run(x, nullptr);
}

template <typename T>
Tensor<T> MedianFilter<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape();
  return run(x, &selected_);
}

template <typename T>
Tensor<T> MedianFilter<T>::backward(const Tensor<T>& dy) {
  if (dy.size() != selected_.size()) throw std::invalid_argument("MedianFilter::backward: gradient shape mismatch");
  Tensor<T> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
  const std::size_t pl = dy.plane();
  std::size_t o = 0;
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      T* d = dx.plane_ptr(n, c);
      const T* g = dy.plane_ptr(n, c);
      for (std::size_t i = 0; i < pl; ++i, ++o) d[selected_[o]] += g[i];
    }
  return dx;
}

// ---------------------------------------------------------------- ChannelSoftmax

template <typename T>
Tensor<T> ChannelSoftmax<T>::apply(const Tensor<T>& x) const {
  Tensor<T> y(x.n(), x.c(), x.h(), x.w());
  const std::size_t pl = x.plane();
  std::vector<double> e(static_cast<std::size_t>(x.c()));
  for (int n = 0; n < x.n(); ++n)
    for (std::size_t p = 0; p < pl; ++p) {
      double m = x.plane_ptr(n, 0)[p];
      for (int c = 1; c < x.c(); ++c) m = std::max(m, static_cast<double>(x.plane_ptr(n, c)[p]));
      double s = 0.0;
      for (int c = 0; c < x.c(); ++c) {
        e[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(x.plane_ptr(n, c)[p]) - m);
        s += e[static_cast<std::size_t>(c)];
      }
      for (int c = 0; c < x.c(); ++c) y.plane_ptr(n, c)[p] = static_cast<T>(e[static_cast<std::size_t>(c)] / s);
    }
  return y;
}

template <typename T>
Tensor<T> ChannelSoftmax<T>::forward(const Tensor<T>& x) {
  output_ = apply(x);
  return output_;
}

template <typename T>
Tensor<T> ChannelSoftmax<T>::backward(const Tensor<T>& dy) {
  if (!dy.same_shape(output_)) throw std::invalid_argument("ChannelSoftmax::backward: gradient shape mismatch");
  Tensor<T> dx(dy.n(), dy.c(), dy.h(), dy.w());
  const std::size_t pl = dy.plane();
  for (int n = 0; n < dy.n(); ++n)
    for (std::size_t p = 0; p < pl; ++p) {
      double dot = 0.0;
      for (int c = 0; c < dy.c(); ++c)
        dot += static_cast<double>(dy.plane_ptr(n, c)[p]) * output_.plane_ptr(n, c)[p];
      for (int c = 0; c < dy.c(); ++c) {
        const double pc = output_.plane_ptr(n, c)[p];
        dx.plane_ptr(n, c)[p] = static_cast<T>(pc * (dy.plane_ptr(n, c)[p] - dot));
      }
    }
  return dx;
}

// ---------------------------------------------------------------- helpers

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw std::invalid_argument("concat_channels: batch or spatial mismatch");
  Tensor<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t pl = a.plane();
  for (int n = 0; n < a.n(); ++n) {
    std::memcpy(y.plane_ptr(n, 0), a.plane_ptr(n, 0), pl * a.c() * sizeof(T));
    std::memcpy(y.plane_ptr(n, a.c()), b.plane_ptr(n, 0), pl * b.c() * sizeof(T));
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& d, int first_channels) {
  Tensor<T> a(d.n(), first_channels, d.h(), d.w());
  Tensor<T> b(d.n(), d.c() - first_channels, d.h(), d.w());
  const std::size_t pl = d.plane();
  for (int n = 0; n < d.n(); ++n) {
    std::memcpy(a.plane_ptr(n, 0), d.plane_ptr(n, 0), pl * a.c() * sizeof(T));
    std::memcpy(b.plane_ptr(n, 0), d.plane_ptr(n, first_channels), pl * b.c() * sizeof(T));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x) {
  if (!acc.same_shape(x)) throw std::invalid_argument("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

#define SEGDEPTH_INSTANTIATE(T)                                                     \
  template class Conv2d<T>;                                                         \
  template class ConvTranspose2x2<T>;                                               \
  template class BatchNorm2d<T>;                                                    \
  template class ReLU<T>;                                                           \
  template class MaxPool2x2<T>;                                                     \
  template class UpsampleBilinear<T>;                                               \
  template class FitToSize<T>;                                                      \
  template class MedianFilter<T>;                                                   \
  template class ChannelSoftmax<T>;                                                 \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);        \
  template std::pair<Tensor<T>, Tensor<T>> split_channels<T>(const Tensor<T>&, int); \
  template void add_inplace<T>(Tensor<T>&, const Tensor<T>&);

SEGDEPTH_INSTANTIATE(float)
SEGDEPTH_INSTANTIATE(double)

#undef SEGDEPTH_INSTANTIATE

}  // namespace segdepth::nn
