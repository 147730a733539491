# Keeps `import helpers` working from every test module.
