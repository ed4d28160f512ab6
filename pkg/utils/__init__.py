# This file initializes the utils package
