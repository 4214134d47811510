#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

namespace fixtures {

inline std::filesystem::path root() { return SIEVEFL_FIXTURE_DIR; }
inline std::filesystem::path shop() { return root() / "shop"; }

inline constexpr const char* kSeededDocId =
    "com.shop.PriceCalculator#applyDiscount(double,int)@main/java/com/shop/PriceCalculator.java:24";
inline constexpr const char* kTotalDocId =
    "com.shop.PriceCalculator#total(Cart,int)@main/java/com/shop/PriceCalculator.java:43";

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto p = std::filesystem::temp_directory_path() /
                   ("sievefl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace fixtures
