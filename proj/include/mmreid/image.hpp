#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mmreid {

// Dense H x W x 3 pixel block, values in [0,1], row-major (y, x, channel).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h, int w, double fill = 0.0)
        : height(h), width(w), px(static_cast<std::size_t>(h) * w * 3, fill) {}

    double& at(int y, int x, int c) {
        return px[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int y, int x, int c) const {
        return px[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    int size() const { return height * width * 3; }
};

// Row per patch, patches ordered row-major over the patch grid; within a
// patch pixels are row-major with interleaved channels.
inline std::vector<double> patchify(const Image& img, int patch) {
    if (img.height % patch != 0 || img.width % patch != 0) {
        throw std::invalid_argument("patchify: image " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width) + " not divisible by patch " +
                                    std::to_string(patch));
    }
    const int ph = img.height / patch;
    const int pw = img.width / patch;
    const int dim = patch * patch * 3;
    std::vector<double> out(static_cast<std::size_t>(ph) * pw * dim);
    std::size_t row = 0;
    for (int py = 0; py < ph; ++py) {
        for (int px_ = 0; px_ < pw; ++px_) {
            double* dst = out.data() + row * dim;
            std::size_t k = 0;
            for (int y = 0; y < patch; ++y) {
                for (int x = 0; x < patch; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        dst[k++] = img.at(py * patch + y, px_ * patch + x, c);
                    }
                }
            }
            ++row;
        }
    }
    return out;
}

// Inverse of patchify for a full patch matrix.
inline Image unpatchify(const std::vector<double>& patches, int height, int width, int patch) {
    Image img(height, width);
    const int pw = width / patch;
    const int dim = patch * patch * 3;
    for (std::size_t row = 0; row * dim < patches.size(); ++row) {
        const int py = static_cast<int>(row) / pw;
        const int px_ = static_cast<int>(row) % pw;
        const double* src = patches.data() + row * dim;
        std::size_t k = 0;
        for (int y = 0; y < patch; ++y) {
            for (int x = 0; x < patch; ++x) {
                for (int c = 0; c < 3; ++c) {
                    img.at(py * patch + y, px_ * patch + x, c) = src[k++];
                }
            }
        }
    }
    return img;
}

}  // namespace mmreid
