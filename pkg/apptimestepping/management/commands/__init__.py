# Commands package 