#pragma once

#include <stdexcept>
#include <string>

namespace copbal {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DegenerateCalibration : public Error {
public:
  using Error::Error;
};

class CorruptStore : public Error {
public:
  using Error::Error;
};

class VersionMismatch : public Error {
public:
  using Error::Error;
};

class IoFailure : public Error {
public:
  using Error::Error;
};

class RangeOverflow : public Error {
public:
  using Error::Error;
};

class InsufficientData : public Error {
public:
  using Error::Error;
};

class MalformedScript : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class EmptySeries : public Error {
public:
  using Error::Error;
};

class NoDataYet : public Error {
public:
  using Error::Error;
};

class PortInUse : public Error {
public:
  using Error::Error;
};

} // namespace copbal
