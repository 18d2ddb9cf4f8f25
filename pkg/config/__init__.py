# Initialize config package
