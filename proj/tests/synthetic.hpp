#pragma once

// Synthetic RIG-shaped datasets for pipeline-level tests. Regimes are keyed
// to disjoint dose windows and distinct categorical signatures so the
// first stage and the clustering layer both have signal to work with.

#include "sodip/dataset.hpp"

#include <functional>

namespace sodip::testgen {

struct Regime {
    std::string film;
    std::string base_polymer;
    double dose_lo, dose_hi;
    // target mean as a function of (dose, temp, time, monomer_conc)
    std::function<double(double, double, double, double)> response;
    double noise = 2.0;
};

inline RigRecord make_record(Rng& rng, const Regime& regime) {
    RigRecord rec;
    rec.categoricals = {regime.film,  "Styrene",        regime.base_polymer,
                        "Film",       "Goodfellow",     "pre-irradiation",
                        "gamma",      "methanol",       ""};
    rec.numerics[kSize] = 125.0;
    rec.numerics[kMwBase] = 100.08;
    rec.numerics[kMwMonomer] = 104.15;
    rec.numerics[kMwSolvent] = 32.04;
    rec.numerics[kMwAdditive] = 0.0;
    rec.numerics[kDose] = rng.uniform(regime.dose_lo, regime.dose_hi);
    rec.numerics[kTemp] = rng.uniform(20.0, 80.0);
    rec.numerics[kTime] = rng.uniform(1.0, 48.0);
    rec.numerics[kMonomerConc] = rng.uniform(5.0, 95.0);
    rec.numerics[kSolventConc] = rng.uniform(0.0, 50.0);
    rec.numerics[kAdditiveConc] = 0.0;
    return rec;
}

inline Dataset regime_dataset(const std::vector<Regime>& regimes, Index n_per_regime,
                              std::uint64_t seed, std::vector<int>* regime_of = nullptr) {
    Dataset ds;
    ds.schema = DescriptorSchema::rig_default();
    ds.provenance = "synthetic";
    Rng rng(seed);
    for (std::size_t r = 0; r < regimes.size(); ++r) {
        for (Index i = 0; i < n_per_regime; ++i) {
            RigRecord rec = make_record(rng, regimes[r]);
            const double mean =
                regimes[r].response(rec.numerics[kDose], rec.numerics[kTemp],
                                    rec.numerics[kTime], rec.numerics[kMonomerConc]);
            rec.target = std::clamp(mean + regimes[r].noise * rng.normal(), 0.0, 1000.0);
            ds.records.push_back(std::move(rec));
            if (regime_of) regime_of->push_back(int(r));
        }
    }
    return ds;
}

// One smooth regime: target linear in dose and temperature.
inline Dataset linear_dataset(Index n, std::uint64_t seed, double noise = 2.0) {
    Regime regime{"PS-g-ETFE", "ETFE", 10.0, 100.0,
                  [](double dose, double temp, double, double conc) {
                      return 20.0 + 2.0 * dose + 0.8 * temp + 0.3 * conc;
                  },
                  noise};
    return regime_dataset({regime}, n, seed);
}

// Three well-separated regimes with different response shapes and scales.
inline std::vector<Regime> three_regimes() {
    return {
        Regime{"PS-g-ETFE", "ETFE", 5.0, 30.0,
               [](double dose, double, double, double) {
                   return 15.0 + 140.0 / (1.0 + std::exp(-(dose - 17.0)));
               },
               2.0},
        Regime{"PS-g-FEP", "FEP", 45.0, 70.0,
               [](double dose, double temp, double, double) {
                   return 240.0 + 2.5 * (dose - 57.0) + 0.9 * (temp - 50.0);
               },
               4.0},
        Regime{"pVBC-g-PEEK", "PEEK", 85.0, 110.0,
               [](double dose, double, double, double conc) {
                   return 420.0 + 45.0 * std::sin(dose * 0.45) + 0.25 * conc;
               },
               8.0},
    };
}

}  // namespace sodip::testgen
