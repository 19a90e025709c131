# DiracDecay package initializer
APP_NAME = "DiracDecay"
VERSION = "0.1.0"
