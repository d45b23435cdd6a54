# Test package for sci-figure-toolkit
