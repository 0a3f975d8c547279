#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace btdiff {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HoleInPanel : public Error {
public:
    HoleInPanel(std::string asset, std::string date)
        : Error("missing price for " + asset + " on " + date),
          asset_(std::move(asset)),
          date_(std::move(date)) {}

    const std::string& asset() const noexcept { return asset_; }
    const std::string& date() const noexcept { return date_; }

private:
    std::string asset_;
    std::string date_;
};

class BadPrice : public Error {
public:
    using Error::Error;
};

class BadCalendar : public Error {
public:
    using Error::Error;
};

class BadSpec : public Error {
public:
    using Error::Error;
};

class InfeasibleConstraint : public Error {
public:
    using Error::Error;
};

class NotEnoughHistory : public Error {
public:
    using Error::Error;
};

class NotEnoughEngines : public Error {
public:
    using Error::Error;
};

class NotEnoughClusters : public Error {
public:
    using Error::Error;
};

class UndefinedRatio : public Error {
public:
    using Error::Error;
};

class LearnerUnavailable : public Error {
public:
    using Error::Error;
};

class BadSchedule : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace btdiff
