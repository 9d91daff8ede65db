#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "nnforget/data.hpp"
#include "nnforget/nn.hpp"

namespace testing {

// Ten noisy clusters in `dim` dimensions, `per_class` examples each, pixels
// clamped to [0, 1]. Labels cycle 0..9 so every prefix is roughly balanced.
// With `twin_of_8` set, class 8's centre copies that class's centre with a
// quarter of the coordinates redrawn, so the two classes interfere. A nonzero
// `noise_seed` draws fresh samples around the same centres.
inline nnforget::ImageDataset blob_dataset(int per_class, int dim, std::uint64_t seed,
                                           double noise = 0.15, int twin_of_8 = -1,
                                           std::uint64_t noise_seed = 0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, noise);
    std::vector<Eigen::VectorXd> centers;
    for (int c = 0; c < nnforget::kNumClasses; ++c) {
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v[i] = unit(rng) < 0.3 ? 0.8 : 0.1;
        centers.push_back(v);
    }
    if (twin_of_8 >= 0) {
        std::mt19937_64 twin_rng(seed ^ 0x7717);
        centers[8] = centers[twin_of_8];
        for (int i = 0; i < dim; ++i)
            if (unit(twin_rng) < 0.25) centers[8][i] = unit(twin_rng) < 0.3 ? 0.8 : 0.1;
    }
    if (noise_seed != 0) rng.seed(noise_seed);
    nnforget::ImageDataset ds;
    ds.rows = 1;
    ds.cols = dim;
    const int n = per_class * nnforget::kNumClasses;
    ds.images.resize(dim, n);
    for (int k = 0; k < n; ++k) {
        const int c = k % nnforget::kNumClasses;
        for (int i = 0; i < dim; ++i) {
            ds.images(i, k) = static_cast<float>(std::clamp(centers[c][i] + gauss(rng), 0.0, 1.0));
        }
        ds.labels.push_back(c);
    }
    return ds;
}

inline Eigen::MatrixXd random_inputs(int dim, int batch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd x(dim, batch);
    for (int j = 0; j < batch; ++j)
        for (int i = 0; i < dim; ++i) x(i, j) = gauss(rng);
    return x;
}

}  // namespace testing
