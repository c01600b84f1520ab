# Empty file to mark tests as a package 