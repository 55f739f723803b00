#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/finance.hpp"
#include "prism/random.hpp"

namespace prism {

/// Seeded sector factor model for synthetic price panels.
///
/// Daily log return of ticker i in sector s on day t:
///   vol * (a_m(t) M_t + a_s(t) S_{s,t} + a_e E_{i,t})
/// with independent standard normal M, S, E. Shocks rescale the loadings
/// over a day range; anticorrelated pairs replace S_b by
/// -rho S_a + sqrt(1 - rho^2) S_b. All normals are drawn on every day in a
/// fixed order, so configs differing only in shocks share their noise.
struct FixtureShock {
    std::string kind;          // decorrelate | spike | drift
    std::vector<int> sectors;  // decorrelate, drift
    std::size_t start = 0, end = 0;
    double strength = 1.0;     // spike: market loading multiplier
};

struct AnticorrelatedPair {
    int a = 0, b = 0;
    double rho = 0.0;
};

struct MissingPrices {
    std::size_t ticker = 0;
    double fraction = 0.0;
};

struct FixtureEvent {
    std::string label;
    std::size_t day = 0;
};

struct FixtureConfig {
    std::uint64_t seed = 1;
    Date start_date = Date::from_ymd(2022, 1, 3);
    std::size_t days = 600;
    int sectors = 6;
    int tickers_per_sector = 5;
    double market_loading = 0.3;
    double sector_loading = 0.85;
    double idiosyncratic = 0.45;
    double daily_vol = 0.012;
    double initial_price = 100.0;
    int decimals = 4;
    std::vector<AnticorrelatedPair> anticorrelated;
    std::vector<MissingPrices> missing;
    std::vector<FixtureShock> shocks;
    std::vector<FixtureEvent> events;
};

inline FixtureConfig parse_fixture_config(const nlohmann::json& j) {
    FixtureConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("start_date")) c.start_date = parse_date(j.at("start_date").get<std::string>());
        c.days = j.value("days", c.days);
        c.sectors = j.value("sectors", c.sectors);
        c.tickers_per_sector = j.value("tickers_per_sector", c.tickers_per_sector);
        c.market_loading = j.value("market_loading", c.market_loading);
        c.sector_loading = j.value("sector_loading", c.sector_loading);
        c.idiosyncratic = j.value("idiosyncratic", c.idiosyncratic);
        c.daily_vol = j.value("daily_vol", c.daily_vol);
        c.initial_price = j.value("initial_price", c.initial_price);
        c.decimals = j.value("decimals", c.decimals);
        for (const auto& p : j.value("anticorrelated", nlohmann::json::array()))
            c.anticorrelated.push_back({p.at("a").get<int>(), p.at("b").get<int>(), p.at("rho").get<double>()});
        for (const auto& m : j.value("missing", nlohmann::json::array()))
            c.missing.push_back({m.at("ticker").get<std::size_t>(), m.at("fraction").get<double>()});
        for (const auto& s : j.value("shocks", nlohmann::json::array())) {
            FixtureShock shock;
            shock.kind = s.at("kind").get<std::string>();
            shock.sectors = s.value("sectors", std::vector<int>{});
            shock.start = s.at("start").get<std::size_t>();
            shock.end = s.at("end").get<std::size_t>();
            shock.strength = s.value("strength", 1.0);
            c.shocks.push_back(std::move(shock));
        }
        for (const auto& e : j.value("events", nlohmann::json::array()))
            c.events.push_back({e.at("label").get<std::string>(), e.at("day").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::ParseError, std::string("fixture config: ") + e.what());
    }

    const int tickers = c.sectors * c.tickers_per_sector;
    if (c.days < 2 || c.sectors < 1 || c.tickers_per_sector < 1 || c.sectors > 26)
        fail(ErrorKind::InvalidArgument, "fixture needs days >= 2 and 1..26 sectors of at least one ticker");
    if (!(c.daily_vol > 0.0) || !(c.initial_price > 0.0) || c.decimals < 0 || c.decimals > 12)
        fail(ErrorKind::InvalidArgument, "fixture volatility, price and decimals out of range");
    for (const auto& p : c.anticorrelated)
        if (p.a < 0 || p.b < 0 || p.a >= c.sectors || p.b >= c.sectors || p.a == p.b || !(std::abs(p.rho) <= 1.0))
            fail(ErrorKind::InvalidArgument, "invalid anticorrelated sector pair");
    for (const auto& m : c.missing)
        if (m.ticker >= static_cast<std::size_t>(tickers) || !(m.fraction >= 0.0 && m.fraction < 1.0))
            fail(ErrorKind::InvalidArgument, "invalid missing-price entry");
    for (const auto& s : c.shocks) {
        if (s.kind != "decorrelate" && s.kind != "spike" && s.kind != "drift")
            fail(ErrorKind::InvalidArgument, "unknown shock kind '" + s.kind + "'");
        if (s.start >= s.end || s.end > c.days) fail(ErrorKind::InvalidArgument, "shock day range is empty or too long");
        for (int sec : s.sectors)
            if (sec < 0 || sec >= c.sectors) fail(ErrorKind::InvalidArgument, "shock sector out of range");
    }
    for (const auto& e : c.events)
        if (e.day >= c.days) fail(ErrorKind::InvalidArgument, "fixture event day out of range");
    return c;
}

inline std::string fixture_ticker(int sector, int member) {
    return std::string(1, static_cast<char>('A' + sector)) + std::to_string(member + 1);
}

/// Weekday calendar starting at the first weekday on or after start_date.
inline std::vector<Date> fixture_dates(const FixtureConfig& c) {
    std::vector<Date> out;
    Date d = c.start_date;
    while (out.size() < c.days) {
        if (d.weekday() < 5) out.push_back(d);
        d = d.plus_days(1);
    }
    return out;
}

/// Sector index of every ticker, in column order.
inline Labels fixture_sectors(const FixtureConfig& c) {
    Labels out;
    for (int s = 0; s < c.sectors; ++s)
        for (int m = 0; m < c.tickers_per_sector; ++m) out.push_back(s);
    return out;
}

inline PricePanel generate_fixture(const FixtureConfig& c) {
    const int n = c.sectors * c.tickers_per_sector;
    PricePanel p;
    p.dates = fixture_dates(c);
    for (int s = 0; s < c.sectors; ++s)
        for (int m = 0; m < c.tickers_per_sector; ++m) p.tickers.push_back(fixture_ticker(s, m));
    p.prices.resize(static_cast<Eigen::Index>(c.days), n);

    Rng rng(split_seed(c.seed, {1}));
    const Labels sector = fixture_sectors(c);
    std::vector<double> log_price(static_cast<std::size_t>(n), std::log(c.initial_price));
    for (Eigen::Index i = 0; i < n; ++i) p.prices(0, i) = c.initial_price;

    for (std::size_t t = 1; t < c.days; ++t) {
        const double market = rng.normal();
        std::vector<double> factor(static_cast<std::size_t>(c.sectors));
        for (auto& f : factor) f = rng.normal();
        for (const auto& pair : c.anticorrelated)
            factor[static_cast<std::size_t>(pair.b)] = -pair.rho * factor[static_cast<std::size_t>(pair.a)] +
                                                        std::sqrt(1.0 - pair.rho * pair.rho) * factor[static_cast<std::size_t>(pair.b)];
        for (int i = 0; i < n; ++i) {
            const double noise = rng.normal();
            double am = c.market_loading, as = c.sector_loading;
            for (const auto& s : c.shocks) {
                if (t < s.start || t >= s.end) continue;
                const bool hit = std::find(s.sectors.begin(), s.sectors.end(), sector[static_cast<std::size_t>(i)]) !=
                                 s.sectors.end();
                if (s.kind == "spike") {
                    am *= s.strength;
                } else if (s.kind == "decorrelate" && hit) {
                    am = 0.0;
                    as = 0.0;
                } else if (s.kind == "drift" && hit) {
                    // loadings fade linearly to zero across the range
                    const double keep =
                        1.0 - static_cast<double>(t - s.start + 1) / static_cast<double>(s.end - s.start);
                    am *= keep;
                    as *= keep;
                }
            }
            const double r =
                c.daily_vol * (am * market + as * factor[static_cast<std::size_t>(sector[static_cast<std::size_t>(i)])] +
                               c.idiosyncratic * noise);
            log_price[static_cast<std::size_t>(i)] += r;
            p.prices(static_cast<Eigen::Index>(t), i) = std::exp(log_price[static_cast<std::size_t>(i)]);
        }
    }

    for (std::size_t k = 0; k < c.missing.size(); ++k) {
        const auto& m = c.missing[k];
        Rng pick(split_seed(c.seed, {2, k}));
        std::vector<std::size_t> days(c.days);
        std::iota(days.begin(), days.end(), std::size_t{0});
        const auto count = static_cast<std::size_t>(std::floor(m.fraction * static_cast<double>(c.days)));
        for (std::size_t q = 0; q < count; ++q) {
            const auto j = q + static_cast<std::size_t>(pick.below(days.size() - q));
            std::swap(days[q], days[j]);
            p.prices(static_cast<Eigen::Index>(days[q]), static_cast<Eigen::Index>(m.ticker)) =
                std::numeric_limits<double>::quiet_NaN();
        }
    }
    return p;
}

/// Prices at fixed precision; missing cells are left empty.
inline void write_prices(std::ostream& out, const PricePanel& p, int decimals) {
    out << "date";
    for (const auto& t : p.tickers) out << ',' << t;
    out << '\n';
    char buf[64];
    for (std::size_t t = 0; t < p.dates.size(); ++t) {
        out << p.dates[t].to_string();
        for (Eigen::Index i = 0; i < p.prices.cols(); ++i) {
            out << ',';
            const double v = p.prices(static_cast<Eigen::Index>(t), i);
            if (std::isnan(v)) continue;
            std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
            out << buf;
        }
        out << '\n';
    }
}

} // namespace prism
