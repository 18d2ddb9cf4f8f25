# Initialize modules package
