#include "sll/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>


namespace sll {
namespace {

constexpr std::size_t kMaxBoxSize = 50'000'000;

std::size_t box_size(int d, int L)
{
    std::size_t size = 1;
    for (int i = 0; i < d; ++i)
    {
        size *= static_cast<std::size_t>(2 * L + 1);
        if (size > kMaxBoxSize)
            throw std::invalid_argument("kernel box [-L, L]^d is too large");
    }
    return size;
}

// Base-(2L+1) encoding of a point of the box; SIZE_MAX when outside.
std::size_t box_index(std::span<const std::int32_t> x, int L)
{
    std::size_t index = 0;
    std::size_t radix = 1;
    for (std::int32_t xi : x)
    {
        if (xi < -L || xi > L)
            return static_cast<std::size_t>(-1);
        index += static_cast<std::size_t>(xi + L) * radix;
        radix *= static_cast<std::size_t>(2 * L + 1);
    }
    return index;
}

void box_decode(std::size_t index, int d, int L, std::int32_t* out)
{
    const auto side = static_cast<std::size_t>(2 * L + 1);
    for (int i = 0; i < d; ++i)
    {
        out[i] = static_cast<std::int32_t>(index % side) - L;
        index /= side;
    }
}

}  // namespace

SpreadOutKernel SpreadOutKernel::uniform_box(int d, int L)
{
    if (d < 1)
        throw std::invalid_argument("uniform_box: dimension must be >= 1");
    if (L < 1)
        throw std::invalid_argument("uniform_box: range must be >= 1");
    SpreadOutKernel k;
    k.d_ = d;
    k.L_ = L;
    k.uniform_ = true;
    const std::size_t size = box_size(d, L);
    const std::size_t origin = (size - 1) / 2;
    const double mass = 1.0 / static_cast<double>(size - 1);
    k.box_mass_.assign(size, mass);
    k.box_mass_[origin] = 0.0;
    k.offsets_.resize((size - 1) * static_cast<std::size_t>(d));
    k.masses_.assign(size - 1, mass);
    std::size_t j = 0;
    for (std::size_t i = 0; i < size; ++i)
    {
        if (i == origin)
            continue;
        box_decode(i, d, L, k.offsets_.data() + j * static_cast<std::size_t>(d));
        ++j;
    }
    k.finish();
    return k;
}

SpreadOutKernel SpreadOutKernel::from_table(int d, std::span<const LatticePoint> points,
                                            std::span<const double> masses)
{
    if (d < 1)
        throw std::invalid_argument("from_table: dimension must be >= 1");
    if (points.size() != masses.size() || points.empty())
        throw std::invalid_argument("from_table: points and masses must align");
    int L = 0;
    for (const auto& p : points)
    {
        if (static_cast<int>(p.size()) != d)
            throw std::invalid_argument("from_table: point of wrong dimension");
        for (auto xi : p)
            L = std::max(L, std::abs(xi));
    }
    if (L == 0)
        throw std::invalid_argument("from_table: D(0) must be 0");

    SpreadOutKernel k;
    k.d_ = d;
    k.L_ = L;
    k.box_mass_.assign(box_size(d, L), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
    {
        if (!(masses[i] >= 0.0))
            throw std::invalid_argument("from_table: negative mass");
        k.box_mass_[box_index(points[i], L)] += masses[i];
        total += masses[i];
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("from_table: masses must sum to 1");
    const std::size_t origin = (k.box_mass_.size() - 1) / 2;
    if (k.box_mass_[origin] != 0.0)
        throw std::invalid_argument("from_table: D(0) must be 0");
    const std::size_t size = k.box_mass_.size();
    for (std::size_t i = 0; i < size; ++i)
    {
        // The encoding maps x -> size-1-i for -x.
        if (std::abs(k.box_mass_[i] - k.box_mass_[size - 1 - i]) > 1e-15)
            throw std::invalid_argument("from_table: D must be symmetric");
    }
    for (std::size_t i = 0; i < size; ++i)
    {
        if (k.box_mass_[i] <= 0.0)
            continue;
        const std::size_t j = k.masses_.size();
        k.masses_.push_back(k.box_mass_[i]);
        k.offsets_.resize((j + 1) * static_cast<std::size_t>(d));
        box_decode(i, d, L, k.offsets_.data() + j * static_cast<std::size_t>(d));
    }
    k.finish();
    return k;
}

void SpreadOutKernel::finish()
{
    max_mass_ = *std::max_element(masses_.begin(), masses_.end());
    if (uniform_)
        return;
    // Walker alias table (Vose's construction).
    const std::size_t n = masses_.size();
    alias_prob_.assign(n, 0.0);
    alias_index_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i)
    {
        scaled[i] = masses_[i] * static_cast<double>(n);
        (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty())
    {
        const auto s = small.back();
        small.pop_back();
        const auto l = large.back();
        alias_prob_[s] = scaled[s];
        alias_index_[s] = l;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if (scaled[l] < 1.0)
        {
            large.pop_back();
            small.push_back(l);
        }
    }
    for (auto i : large)
        alias_prob_[i] = 1.0;
    for (auto i : small)
        alias_prob_[i] = 1.0;
}

double SpreadOutKernel::mass(std::span<const std::int32_t> x) const
{
    if (static_cast<int>(x.size()) != d_)
        throw std::invalid_argument("mass: dimension mismatch");
    const std::size_t i = box_index(x, L_);
    return i == static_cast<std::size_t>(-1) ? 0.0 : box_mass_[i];
}

std::size_t SpreadOutKernel::sample_index(RandomStream& rng) const noexcept
{
    const std::size_t n = masses_.size();
    const auto i = static_cast<std::size_t>(rng.below(n));
    if (uniform_)
        return i;
    return rng.uniform() < alias_prob_[i] ? i : alias_index_[i];
}

ForwardBondSampler::ForwardBondSampler(const SpreadOutKernel& kernel, double p)
    : kernel_(&kernel), p_(p)
{
    if (!(p >= 0.0) || p * kernel.max_mass() > 1.0 + 1e-12)
        throw std::invalid_argument("bond parameter must satisfy 0 <= p D(x) <= 1");
    if (kernel.is_uniform())
    {
        const auto n = static_cast<std::int64_t>(kernel.support_size());
        q_ = std::min(1.0, p / static_cast<double>(n));
        if (q_ > 0.0 && q_ < 1.0)
            count_ = boost::random::binomial_distribution<std::int64_t, double>(n, q_);
    }
}

void ForwardBondSampler::operator()(RandomStream& rng,
                                    std::vector<std::uint32_t>& out) const
{
    if (p_ == 0.0)
        return;
    const SpreadOutKernel& k = *kernel_;
    const std::size_t n = k.support_size();
    if (!k.is_uniform())
    {
        for (std::size_t i = 0; i < n; ++i)
            if (rng.uniform() < p_ * k.support_mass(i))
                out.push_back(static_cast<std::uint32_t>(i));
        return;
    }

    std::size_t count;
    if (q_ >= 1.0)
        count = n;
    else
        count = static_cast<std::size_t>(count_(rng));
    if (count == 0)
        return;
    const std::size_t first = out.size();
    if (2 * count > n || count > 32)
    {
        // Partial Fisher–Yates over the full index range.
        std::vector<std::uint32_t> pool(n);
        std::iota(pool.begin(), pool.end(), 0U);
        for (std::size_t i = 0; i < count; ++i)
        {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return;
    }
    while (out.size() - first < count)
    {
        const auto candidate = static_cast<std::uint32_t>(rng.below(n));
        if (std::find(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
                      candidate)
            == out.end())
            out.push_back(candidate);
    }
}

//---------------------------------------------------------------------------//

double kernel_variance(const SpreadOutKernel& k)
{
    double v = 0.0;
    for (std::size_t i = 0; i < k.support_size(); ++i)
    {
        double r2 = 0.0;
        for (auto xi : k.support_point(i))
            r2 += static_cast<double>(xi) * xi;
        v += r2 * k.support_mass(i);
    }
    return v;
}

double kernel_fourier(const SpreadOutKernel& k, std::span<const double> wavevector)
{
    if (static_cast<int>(wavevector.size()) != k.dimension())
        throw std::invalid_argument("kernel_fourier: wavevector length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < k.support_size(); ++i)
    {
        double phase = 0.0;
        const auto x = k.support_point(i);
        for (std::size_t j = 0; j < x.size(); ++j)
            phase += wavevector[j] * x[j];
        sum += std::cos(phase) * k.support_mass(i);
    }
    return sum;
}

LatticePoint sample_step(const SpreadOutKernel& k, RandomStream& rng)
{
    const auto x = k.support_point(k.sample_index(rng));
    return {x.begin(), x.end()};
}

std::vector<LatticePoint> sample_forward_children(const SpreadOutKernel& k, double p,
                                                  std::span<const std::int32_t> parent,
                                                  RandomStream& rng)
{
    if (static_cast<int>(parent.size()) != k.dimension())
        throw std::invalid_argument("sample_forward_children: dimension mismatch");
    std::vector<std::uint32_t> indices;
    ForwardBondSampler(k, p)(rng, indices);
    std::vector<LatticePoint> children;
    children.reserve(indices.size());
    for (auto i : indices)
    {
        const auto step = k.support_point(i);
        LatticePoint y(parent.begin(), parent.end());
        for (std::size_t j = 0; j < y.size(); ++j)
            y[j] += step[j];
        children.push_back(std::move(y));
    }
    return children;
}

nlohmann::json kernel_to_json(const SpreadOutKernel& k, std::optional<double> p)
{
    if (!k.is_uniform())
        throw std::invalid_argument("only uniform_box kernels are serializable");
    nlohmann::json j = {{"d", k.dimension()}, {"L", k.range()}, {"family", "uniform_box"}};
    if (p)
        j["p"] = *p;
    return j;
}

SpreadOutKernel kernel_from_json(const nlohmann::json& j)
{
    const std::string family = j.value("family", std::string("uniform_box"));
    if (family != "uniform_box")
        throw std::invalid_argument("unknown kernel family: " + family);
    return SpreadOutKernel::uniform_box(j.at("d").get<int>(), j.at("L").get<int>());
}

}  // namespace sll
